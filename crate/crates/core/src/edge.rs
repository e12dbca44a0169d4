//! On-device inference: spectral encoding, the low/high-resolution encoders,
//! channel fusion, and the multi- and single-resolution classifier heads.
//!
//! Encoders are `conv3x3 → relu → avgpool2 → conv3x3 → relu`. Heads are
//! `conv3x3 → relu → conv3x3 → relu → global average → linear → softmax`.
//! The single-resolution head reads the same low-resolution encoder output as
//! the multi-resolution path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{
    adaptive_avg_pool2d, argmax, avg_pool2d, conv2d, linear, relu, softmax, Tensor, TensorError, WeightInit,
    WeightStore,
};
use crate::wavelet::MultiResInput;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdgeError {
    #[error("config: {0}")]
    Config(String),
    #[error("window start {start} outside spectral encoding bank of {size}")]
    WindowOutOfRange { start: usize, size: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, EdgeError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeModelConfig {
    pub r_l: usize,
    pub r_h: usize,
    pub t_l: usize,
    pub t_h: usize,
    /// Mask length `p`; must match the server's patches per side.
    pub patches: usize,
    /// Selected patch-rows `k`.
    pub k: usize,
    pub classes: usize,
    /// Output channels of the first and second conv layers.
    pub channels: [usize; 2],
}

impl Default for EdgeModelConfig {
    fn default() -> Self {
        Self {
            r_l: 16,
            r_h: 64,
            t_l: 16,
            t_h: 16,
            patches: 8,
            k: 2,
            classes: 10,
            channels: [8, 16],
        }
    }
}

const KERNEL: usize = 3;

impl EdgeModelConfig {
    /// Rows of the high-resolution band slice, `(k/p)·R_h`.
    pub fn high_rows(&self) -> usize {
        self.k * self.r_h / self.patches
    }

    /// Number of distinct window positions, `p − k + 1`.
    pub fn bank_size(&self) -> usize {
        self.patches - self.k + 1
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(EdgeError::Config(m));
        if self.patches == 0 || self.k == 0 || self.k > self.patches {
            return err(format!("k = {} must be in 1..={}", self.k, self.patches));
        }
        if !self.r_h.is_multiple_of(self.patches) {
            return err(format!("p = {} does not divide R_h = {}", self.patches, self.r_h));
        }
        if !self.r_l.is_power_of_two() || !self.r_h.is_power_of_two() || self.r_h <= self.r_l {
            return err(format!(
                "R_l = {} and R_h = {} must be powers of two with R_h > R_l",
                self.r_l, self.r_h
            ));
        }
        if self.classes < 2 {
            return err(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.channels.contains(&0) {
            return err("channel widths must be positive".into());
        }
        if self.r_l < 2 || self.t_l < 2 || self.high_rows() < 2 || self.t_h < 2 {
            return err("encoder inputs need at least 2×2 cells for pooling".into());
        }
        Ok(())
    }
}

/// Post-softmax class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub probs: Vec<f32>,
}

impl ClassScores {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs).unwrap_or(0)
    }
}

/// One trainable `[1, (k/p)·R_h, T_h]` tensor per window start.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEncodingBank {
    entries: Vec<Tensor>,
}

pub fn spectral_encoding_name(window_start: usize) -> String {
    format!("edge.spectral_encoding.{window_start}")
}

impl SpectralEncodingBank {
    pub fn new(entries: Vec<Tensor>) -> Self {
        Self { entries }
    }

    pub fn from_weights(weights: &WeightStore, cfg: &EdgeModelConfig) -> Result<Self> {
        let dims = [1, cfg.high_rows(), cfg.t_h];
        let entries = (0..cfg.bank_size())
            .map(|s| {
                let name = spectral_encoding_name(s);
                let t = weights.get(&name)?;
                t.expect_dims(&dims, &name)?;
                Ok(t.clone())
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, window_start: usize) -> Result<&Tensor> {
        self.entries.get(window_start).ok_or(EdgeError::WindowOutOfRange {
            start: window_start,
            size: self.entries.len(),
        })
    }
}

/// Stacks the high-resolution bands (channel 0) with the bank entry for the
/// input's window (channel 1).
pub fn spectral_encode(input: &MultiResInput, bank: &SpectralEncodingBank) -> Result<Tensor> {
    let enc = bank.get(input.window_start)?;
    let (rows, cols) = (input.high.dims()[0], input.high.dims()[1]);
    enc.expect_dims(&[1, rows, cols], "spectral encoding")?;
    let high = input.high.clone().reshape(vec![1, rows, cols])?;
    Ok(high.concat_channels(enc)?)
}

fn conv_layer(x: &Tensor, weights: &WeightStore, prefix: &str) -> Result<Tensor> {
    let w = weights.get(&format!("{prefix}.weight"))?;
    let b = weights.get(&format!("{prefix}.bias"))?;
    Ok(relu(&conv2d(x, w, b, 1, KERNEL / 2)?))
}

fn encoder(x: &Tensor, weights: &WeightStore, prefix: &str) -> Result<Tensor> {
    let h = conv_layer(x, weights, &format!("{prefix}.conv1"))?;
    let h = avg_pool2d(&h, 2)?;
    conv_layer(&h, weights, &format!("{prefix}.conv2"))
}

fn head(x: &Tensor, weights: &WeightStore, prefix: &str) -> Result<ClassScores> {
    let h = conv_layer(x, weights, &format!("{prefix}.conv1"))?;
    let h = conv_layer(&h, weights, &format!("{prefix}.conv2"))?;
    let c = h.dims()[0];
    let pooled = adaptive_avg_pool2d(&h, 1, 1)?.reshape(vec![c])?;
    let logits = linear(
        &pooled,
        weights.get(&format!("{prefix}.fc.weight"))?,
        weights.get(&format!("{prefix}.fc.bias"))?,
    )?;
    Ok(ClassScores {
        probs: softmax(&logits)?.into_data(),
    })
}

/// Low-resolution encoder features, shared by both classifiers.
pub fn low_encoder_features(low: &Tensor, weights: &WeightStore, cfg: &EdgeModelConfig) -> Result<Tensor> {
    low.expect_dims(&[cfg.r_l, cfg.t_l], "low-resolution input")?;
    let x = low.clone().reshape(vec![1, cfg.r_l, cfg.t_l])?;
    encoder(&x, weights, "edge.low")
}

/// High-resolution encoder features of the spectrally encoded bands.
pub fn high_encoder_features(input: &MultiResInput, weights: &WeightStore, cfg: &EdgeModelConfig) -> Result<Tensor> {
    input
        .high
        .expect_dims(&[cfg.high_rows(), cfg.t_h], "high-resolution input")?;
    let bank = SpectralEncodingBank::from_weights(weights, cfg)?;
    encoder(&spectral_encode(input, &bank)?, weights, "edge.high")
}

/// Pools both feature maps to the smaller spatial size and stacks channels.
pub fn fuse(low: &Tensor, high: &Tensor) -> Result<Tensor> {
    let h = low.dims()[1].min(high.dims()[1]);
    let w = low.dims()[2].min(high.dims()[2]);
    let low = adaptive_avg_pool2d(low, h, w)?;
    let high = adaptive_avg_pool2d(high, h, w)?;
    Ok(low.concat_channels(&high)?)
}

pub fn multi_res_forward(input: &MultiResInput, weights: &WeightStore, cfg: &EdgeModelConfig) -> Result<ClassScores> {
    cfg.validate()?;
    let low = low_encoder_features(&input.low, weights, cfg)?;
    let high = high_encoder_features(input, weights, cfg)?;
    head(&fuse(&low, &high)?, weights, "edge.multi")
}

/// Fallback classifier over the low-resolution spectrogram alone.
pub fn single_res_forward(low: &Tensor, weights: &WeightStore, cfg: &EdgeModelConfig) -> Result<ClassScores> {
    cfg.validate()?;
    let features = low_encoder_features(low, weights, cfg)?;
    head(&features, weights, "edge.single")
}

pub fn init_edge_weights(cfg: &EdgeModelConfig, init: &mut WeightInit) -> Result<WeightStore> {
    cfg.validate()?;
    let [c1, c2] = cfg.channels;
    let mut store = WeightStore::new();
    let mut conv = |store: &mut WeightStore, name: &str, c_in: usize, c_out: usize| -> Result<()> {
        store.insert(format!("{name}.weight"), init.fan_in(vec![c_out, c_in, KERNEL, KERNEL]))?;
        store.insert(format!("{name}.bias"), Tensor::zeros(vec![c_out])?)?;
        Ok(())
    };
    conv(&mut store, "edge.low.conv1", 1, c1)?;
    conv(&mut store, "edge.low.conv2", c1, c2)?;
    conv(&mut store, "edge.high.conv1", 2, c1)?;
    conv(&mut store, "edge.high.conv2", c1, c2)?;
    conv(&mut store, "edge.multi.conv1", 2 * c2, c2)?;
    conv(&mut store, "edge.multi.conv2", c2, c2)?;
    conv(&mut store, "edge.single.conv1", c2, c2)?;
    conv(&mut store, "edge.single.conv2", c2, c2)?;
    for head in ["edge.multi", "edge.single"] {
        store.insert(format!("{head}.fc.weight"), init.fan_in(vec![cfg.classes, c2]))?;
        store.insert(format!("{head}.fc.bias"), Tensor::zeros(vec![cfg.classes])?)?;
    }
    for s in 0..cfg.bank_size() {
        store.insert(
            spectral_encoding_name(s),
            init.uniform(vec![1, cfg.high_rows(), cfg.t_h], 1.0),
        )?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn tiny() -> EdgeModelConfig {
        EdgeModelConfig {
            r_l: 4,
            r_h: 8,
            t_l: 4,
            t_h: 4,
            patches: 2,
            k: 1,
            classes: 2,
            channels: [1, 1],
        }
    }

    fn random_input(cfg: &EdgeModelConfig, start: usize, seed: u64) -> MultiResInput {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut m = |r: usize, c: usize| {
            Tensor::new(vec![r, c], (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        MultiResInput {
            low: m(cfg.r_l, cfg.t_l),
            high: m(cfg.high_rows(), cfg.t_h),
            window_start: start,
        }
    }

    fn zeroed(store: &WeightStore) -> WeightStore {
        let mut out = WeightStore::new();
        for (k, v) in store.iter() {
            out.insert(k, Tensor::zeros(v.dims().to_vec()).unwrap()).unwrap();
        }
        out
    }

    #[test]
    fn encode_shapes_and_channels() {
        let cfg = EdgeModelConfig::default();
        let input = random_input(&cfg, 3, 1);
        let bank = SpectralEncodingBank::new(vec![Tensor::zeros(vec![1, 16, 16]).unwrap(); 7]);
        let out = spectral_encode(&input, &bank).unwrap();
        assert_eq!(out.dims(), &[2, 16, 16]);
        assert_eq!(&out.data()[..256], input.high.data());
        assert!(out.data()[256..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_differs_only_in_encoding_channel() {
        let cfg = EdgeModelConfig::default();
        let w = init_edge_weights(&cfg, &mut WeightInit::new(2)).unwrap();
        let bank = SpectralEncodingBank::from_weights(&w, &cfg).unwrap();
        let a = random_input(&cfg, 1, 5);
        let b = MultiResInput {
            window_start: 4,
            ..a.clone()
        };
        let ea = spectral_encode(&a, &bank).unwrap();
        let eb = spectral_encode(&b, &bank).unwrap();
        assert_eq!(&ea.data()[..256], &eb.data()[..256]);
        assert_ne!(&ea.data()[256..], &eb.data()[256..]);
        let c = MultiResInput { window_start: 7, ..a };
        assert!(matches!(
            spectral_encode(&c, &bank),
            Err(EdgeError::WindowOutOfRange { start: 7, size: 7 })
        ));
    }

    #[test]
    fn zero_weights_give_uniform_scores() {
        let cfg = EdgeModelConfig::default();
        let w = zeroed(&init_edge_weights(&cfg, &mut WeightInit::new(1)).unwrap());
        let input = random_input(&cfg, 0, 2);
        for scores in [
            multi_res_forward(&input, &w, &cfg).unwrap(),
            single_res_forward(&input.low, &w, &cfg).unwrap(),
        ] {
            assert_eq!(scores.probs.len(), 10);
            assert!(scores.probs.iter().all(|&p| (p - 0.1).abs() < 1e-7));
        }
    }

    #[test]
    fn forward_is_deterministic_and_normalized() {
        let cfg = EdgeModelConfig::default();
        let w = init_edge_weights(&cfg, &mut WeightInit::new(3)).unwrap();
        let input = random_input(&cfg, 2, 3);
        let a = multi_res_forward(&input, &w, &cfg).unwrap();
        let b = multi_res_forward(&input, &w, &cfg).unwrap();
        assert_eq!(a, b);
        let s: f32 = a.probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(a.probs.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    // tensor-core ops composed by hand for the tiny single-channel model
    fn staged_low(low: &Tensor, w: &WeightStore) -> Tensor {
        let x = low.clone().reshape(vec![1, 4, 4]).unwrap();
        let c1 = relu(
            &conv2d(
                &x,
                w.get("edge.low.conv1.weight").unwrap(),
                w.get("edge.low.conv1.bias").unwrap(),
                1,
                1,
            )
            .unwrap(),
        );
        let p = avg_pool2d(&c1, 2).unwrap();
        relu(
            &conv2d(
                &p,
                w.get("edge.low.conv2.weight").unwrap(),
                w.get("edge.low.conv2.bias").unwrap(),
                1,
                1,
            )
            .unwrap(),
        )
    }

    fn staged_head(x: &Tensor, w: &WeightStore, prefix: &str) -> Vec<f32> {
        let g = |n: &str| w.get(&format!("{prefix}.{n}")).unwrap();
        let h = relu(&conv2d(x, g("conv1.weight"), g("conv1.bias"), 1, 1).unwrap());
        let h = relu(&conv2d(&h, g("conv2.weight"), g("conv2.bias"), 1, 1).unwrap());
        let mean = h.data().iter().sum::<f32>() / h.len() as f32;
        let logits: Vec<f32> = (0..2)
            .map(|c| g("fc.weight").at(&[c, 0]) * mean + g("fc.bias").data()[c])
            .collect();
        let m = logits[0].max(logits[1]);
        let e: Vec<f32> = logits.iter().map(|l| (l - m).exp()).collect();
        e.iter().map(|v| v / (e[0] + e[1])).collect()
    }

    #[test]
    fn tiny_multi_res_matches_staged_composition() {
        let cfg = tiny();
        let w = init_edge_weights(&cfg, &mut WeightInit::new(17)).unwrap();
        let input = random_input(&cfg, 1, 9);
        let got = multi_res_forward(&input, &w, &cfg).unwrap();

        let low = staged_low(&input.low, &w);
        let mut stacked = input.high.data().to_vec();
        stacked.extend_from_slice(w.get("edge.spectral_encoding.1").unwrap().data());
        let hx = Tensor::new(vec![2, 4, 4], stacked).unwrap();
        let c1 = relu(
            &conv2d(
                &hx,
                w.get("edge.high.conv1.weight").unwrap(),
                w.get("edge.high.conv1.bias").unwrap(),
                1,
                1,
            )
            .unwrap(),
        );
        let p = avg_pool2d(&c1, 2).unwrap();
        let high = relu(
            &conv2d(
                &p,
                w.get("edge.high.conv2.weight").unwrap(),
                w.get("edge.high.conv2.bias").unwrap(),
                1,
                1,
            )
            .unwrap(),
        );
        let mut fused = low.data().to_vec();
        fused.extend_from_slice(high.data());
        let fused = Tensor::new(vec![2, 2, 2], fused).unwrap();
        let want = staged_head(&fused, &w, "edge.multi");
        for (a, b) in got.probs.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn tiny_single_res_matches_staged_composition() {
        let cfg = tiny();
        let w = init_edge_weights(&cfg, &mut WeightInit::new(18)).unwrap();
        let input = random_input(&cfg, 0, 10);
        let got = single_res_forward(&input.low, &w, &cfg).unwrap();
        let want = staged_head(&staged_low(&input.low, &w), &w, "edge.single");
        for (a, b) in got.probs.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn single_res_ignores_high_path() {
        let cfg = EdgeModelConfig::default();
        let w = init_edge_weights(&cfg, &mut WeightInit::new(4)).unwrap();
        let input = random_input(&cfg, 0, 4);
        let before = single_res_forward(&input.low, &w, &cfg).unwrap();
        let mut perturbed = w.clone();
        let other = init_edge_weights(&cfg, &mut WeightInit::new(99)).unwrap();
        for (name, t) in other.iter() {
            if name.starts_with("edge.high")
                || name.starts_with("edge.spectral_encoding")
                || name.starts_with("edge.multi")
            {
                perturbed.insert(name, t.clone()).unwrap();
            }
        }
        assert_eq!(single_res_forward(&input.low, &perturbed, &cfg).unwrap(), before);
        assert_ne!(
            multi_res_forward(&input, &perturbed, &cfg).unwrap(),
            multi_res_forward(&input, &w, &cfg).unwrap()
        );
    }

    #[test]
    fn bank_entry_participates() {
        let cfg = EdgeModelConfig::default();
        let w = init_edge_weights(&cfg, &mut WeightInit::new(6)).unwrap();
        let input = random_input(&cfg, 5, 6);
        let before = multi_res_forward(&input, &w, &cfg).unwrap();
        let mut changed = w.clone();
        for v in changed.get_mut(&spectral_encoding_name(5)).unwrap().data_mut() {
            *v += 0.5;
        }
        assert_ne!(multi_res_forward(&input, &changed, &cfg).unwrap(), before);
    }

    #[test]
    fn config_validation() {
        assert!(EdgeModelConfig::default().validate().is_ok());
        assert!(EdgeModelConfig {
            classes: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EdgeModelConfig {
            r_h: 60,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EdgeModelConfig {
            k: 9,
            ..Default::default()
        }
        .validate()
        .is_err());
        let cfg = EdgeModelConfig::default();
        let mut w = init_edge_weights(&cfg, &mut WeightInit::new(1)).unwrap();
        w = {
            let mut s = WeightStore::new();
            for (k, v) in w.iter().filter(|(k, _)| !k.starts_with("edge.multi.fc")) {
                s.insert(k, v.clone()).unwrap();
            }
            s
        };
        let input = random_input(&cfg, 0, 1);
        assert!(matches!(
            multi_res_forward(&input, &w, &cfg),
            Err(EdgeError::Tensor(TensorError::MissingWeight(_)))
        ));
    }
}
