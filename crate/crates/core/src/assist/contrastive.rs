//! Loss-side pieces of contrastive pre-training: band-masking augmentation
//! and the triplet loss. No optimizer lives here.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::tensor::{Tensor, TensorError};
use crate::wavelet::AssistSpectrogram;

use super::{AssistError, Result};

/// Zeroes `band_count` distinct rows of `sa`, chosen uniformly by a
/// xoshiro256++ stream seeded with `seed`.
pub fn mask_random_bands(sa: &AssistSpectrogram, band_count: usize, seed: u64) -> Result<AssistSpectrogram> {
    let dim = sa.dim();
    if band_count > dim {
        return Err(AssistError::Config(format!("cannot mask {band_count} of {dim} bands")));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut grid = sa.grid().clone();
    for row in rand::seq::index::sample(&mut rng, dim, band_count) {
        grid.data_mut()[row * dim..(row + 1) * dim].fill(0.0);
    }
    Ok(AssistSpectrogram::new(grid).expect("shape preserved"))
}

/// `max(0, ‖a−p‖² − ‖a−n‖² + margin)` over flattened tensors.
pub fn triplet_loss(anchor: &Tensor, positive: &Tensor, negative: &Tensor, margin: f32) -> Result<f32> {
    if anchor.len() != positive.len() || anchor.len() != negative.len() {
        return Err(AssistError::Tensor(TensorError::Shape(format!(
            "triplet of sizes {}, {}, {}",
            anchor.len(),
            positive.len(),
            negative.len()
        ))));
    }
    let sq = |a: &Tensor, b: &Tensor| -> f32 { a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum() };
    Ok((sq(anchor, positive) - sq(anchor, negative) + margin).max(0.0))
}
