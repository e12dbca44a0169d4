//! Server-side band selection: a small vision transformer over the
//! assistance spectrogram, attention rollout, and the contiguous band window
//! that becomes the spectral attention mask.

mod contrastive;
mod mask;
mod vit;

pub use contrastive::{mask_random_bands, triplet_loss};
pub use mask::{select_band_window, SpectralAttentionMask};
pub use vit::{
    attention_block, attention_rollout, embed_and_position, generate_mask, generate_mask_traced, importance,
    init_vit_weights, patch_embed_names, patchify, AttentionMap, ImportanceMatrix, MaskTrace,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssistError {
    #[error("config: {0}")]
    Config(String),
    #[error("k = {k} outside 1..={p}")]
    KOutOfRange { k: usize, p: usize },
    #[error("rollout needs at least one attention map")]
    EmptyRollout,
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, AssistError>;

/// Transformer hyperparameters. `mlp_hidden = 0` means blocks carry no MLP
/// sub-layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VitConfig {
    /// Patches per side (`p`); the spectrogram is cut into `p²` tokens.
    pub patches: usize,
    pub embed_dim: usize,
    pub blocks: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
}

impl Default for VitConfig {
    fn default() -> Self {
        Self {
            patches: 8,
            embed_dim: 64,
            blocks: 4,
            heads: 4,
            mlp_hidden: 0,
        }
    }
}

impl VitConfig {
    pub fn tokens(&self) -> usize {
        self.patches * self.patches
    }

    pub fn validate(&self) -> Result<()> {
        if self.patches == 0 || self.embed_dim == 0 || self.blocks == 0 || self.heads == 0 {
            return Err(AssistError::Config(
                "patches, embed_dim, blocks and heads must be positive".into(),
            ));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(AssistError::Config(format!(
                "embed_dim {} not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }

    /// Side length of one patch for an `r_a × r_a` spectrogram.
    pub fn patch_size(&self, r_a: usize) -> Result<usize> {
        if self.patches == 0 || r_a == 0 || !r_a.is_multiple_of(self.patches) {
            return Err(AssistError::Config(format!(
                "{} patches per side does not divide R_a = {r_a}",
                self.patches
            )));
        }
        Ok(r_a / self.patches)
    }
}
