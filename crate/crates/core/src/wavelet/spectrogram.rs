use crate::assist::SpectralAttentionMask;
use crate::tensor::{adaptive_avg_pool_time, Tensor};

use super::{wpt_decompose, AudioClip, Result, Wavelet, WaveletError, WptSpectrogram};

/// Square `R_a × R_a` spectrogram uplinked for band selection.
#[derive(Debug, Clone, PartialEq)]
pub struct AssistSpectrogram {
    grid: Tensor,
}

impl AssistSpectrogram {
    pub fn new(grid: Tensor) -> Result<Self> {
        if grid.rank() != 2 || grid.dims()[0] != grid.dims()[1] {
            return Err(WaveletError::Precondition(format!(
                "assistance spectrogram must be square, got {:?}",
                grid.dims()
            )));
        }
        Ok(Self { grid })
    }

    pub fn dim(&self) -> usize {
        self.grid.dims()[0]
    }

    pub fn grid(&self) -> &Tensor {
        &self.grid
    }

    pub fn into_grid(self) -> Tensor {
        self.grid
    }

    pub fn row(&self, r: usize) -> &[f32] {
        let d = self.dim();
        &self.grid.data()[r * d..(r + 1) * d]
    }
}

/// Pools every band of `spec` to `2^n` frames, giving a square matrix.
pub fn time_avg_pool(spec: &WptSpectrogram) -> Result<AssistSpectrogram> {
    if spec.frames() < spec.bands() {
        return Err(WaveletError::Precondition(format!(
            "{} frames cannot be pooled to {} columns",
            spec.frames(),
            spec.bands()
        )));
    }
    AssistSpectrogram::new(adaptive_avg_pool_time(spec.matrix(), spec.bands())?)
}

/// u8 min-max quantized assistance spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedSpectrogram {
    pub dim: usize,
    pub scale: f32,
    pub offset: f32,
    pub cells: Vec<u8>,
}

impl QuantizedSpectrogram {
    /// Bytes of spectrogram content, i.e. `R_a²`.
    pub fn payload_bytes(&self) -> usize {
        self.cells.len()
    }

    /// Serialized form: f32 scale, f32 offset (little-endian), then the cells.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.cells.len());
        out.extend_from_slice(&self.scale.to_le_bytes());
        out.extend_from_slice(&self.offset.to_le_bytes());
        out.extend_from_slice(&self.cells);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 {
            return Err(WaveletError::Precondition(format!(
                "quantized spectrogram needs at least 9 bytes, got {}",
                bytes.len()
            )));
        }
        let cells = bytes[8..].to_vec();
        let dim = (cells.len() as f64).sqrt().round() as usize;
        if dim * dim != cells.len() {
            return Err(WaveletError::Precondition(format!(
                "{} cells is not a square grid",
                cells.len()
            )));
        }
        Ok(Self {
            dim,
            scale: f32::from_le_bytes(bytes[0..4].try_into().unwrap()),
            offset: f32::from_le_bytes(bytes[4..8].try_into().unwrap()),
            cells,
        })
    }
}

pub fn quantize(spec: &AssistSpectrogram) -> QuantizedSpectrogram {
    let data = spec.grid().data();
    let min = data.iter().copied().fold(f32::INFINITY, f32::min);
    let max = data.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let scale = (max - min) / 255.0;
    let cells = data
        .iter()
        .map(|&v| {
            if scale > 0.0 {
                ((v - min) / scale).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    QuantizedSpectrogram {
        dim: spec.dim(),
        scale,
        offset: min,
        cells,
    }
}

pub fn dequantize(q: &QuantizedSpectrogram) -> Result<AssistSpectrogram> {
    let data = q.cells.iter().map(|&c| q.offset + c as f32 * q.scale).collect();
    AssistSpectrogram::new(Tensor::new(vec![q.dim, q.dim], data)?)
}

/// Low-resolution full spectrum plus the mask-selected high-resolution bands.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiResInput {
    /// `[R_l, T_l]`
    pub low: Tensor,
    /// `[(k/p)·R_h, T_h]`
    pub high: Tensor,
    pub window_start: usize,
}

fn log2_exact(v: usize, what: &str) -> Result<u32> {
    if v < 2 || !v.is_power_of_two() {
        return Err(WaveletError::Precondition(format!(
            "{what} = {v} must be a power of two >= 2"
        )));
    }
    Ok(v.trailing_zeros())
}

/// Full-band `[R_l, T_l]` spectrogram, the input of both edge classifiers.
pub fn low_resolution(clip: &AudioClip, r_l: usize, t_l: usize, wavelet: Wavelet) -> Result<Tensor> {
    let depth = log2_exact(r_l, "R_l")?;
    let spec = wpt_decompose(clip, depth, wavelet)?;
    Ok(adaptive_avg_pool_time(spec.matrix(), t_l)?)
}

/// Builds the multi-resolution input for a clip given a band mask.
#[allow(clippy::too_many_arguments)]
pub fn refine_bands(
    clip: &AudioClip,
    mask: &SpectralAttentionMask,
    r_l: usize,
    r_h: usize,
    t_l: usize,
    t_h: usize,
    wavelet: Wavelet,
) -> Result<MultiResInput> {
    mask.validate().map_err(|e| WaveletError::Mask(e.to_string()))?;
    log2_exact(r_l, "R_l")?;
    let high_depth = log2_exact(r_h, "R_h")?;
    if r_h <= r_l {
        return Err(WaveletError::Precondition(format!(
            "R_h ({r_h}) must exceed R_l ({r_l})"
        )));
    }
    let p = mask.len();
    if !r_h.is_multiple_of(p) {
        return Err(WaveletError::Mask(format!(
            "mask length {p} does not divide R_h = {r_h}"
        )));
    }
    let low = low_resolution(clip, r_l, t_l, wavelet)?;

    let high_spec = wpt_decompose(clip, high_depth, wavelet)?;
    let rows_per_patch = r_h / p;
    let start = mask.window_start() * rows_per_patch;
    let rows = mask.k() * rows_per_patch;
    let frames = high_spec.frames();
    let slice = high_spec.matrix().data()[start * frames..(start + rows) * frames].to_vec();
    let high = adaptive_avg_pool_time(&Tensor::new(vec![rows, frames], slice)?, t_h)?;

    Ok(MultiResInput {
        low,
        high,
        window_start: mask.window_start(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random_clip(seed: u64, len: usize) -> AudioClip {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        AudioClip::from_raw((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 16_000).unwrap()
    }

    #[test]
    fn pool_constant_and_small_case() {
        let spec = WptSpectrogram::new(1, Tensor::filled(vec![2, 6], 3.0).unwrap()).unwrap();
        let sa = time_avg_pool(&spec).unwrap();
        assert_eq!(sa.dim(), 2);
        assert!(sa.grid().data().iter().all(|&v| v == 3.0));

        let m = Tensor::new(vec![2, 4], (1..=8).map(|v| v as f32).collect()).unwrap();
        let sa = time_avg_pool(&WptSpectrogram::new(1, m).unwrap()).unwrap();
        assert_eq!(sa.grid().data(), &[1.5, 3.5, 5.5, 7.5]);
    }

    #[test]
    fn pool_is_square_for_any_depth() {
        let clip = random_clip(3, 4096);
        for depth in 1..=6 {
            let sa = time_avg_pool(&wpt_decompose(&clip, depth, Wavelet::Db4).unwrap()).unwrap();
            assert_eq!(sa.grid().dims(), &[1 << depth, 1 << depth]);
        }
    }

    #[test]
    fn pool_needs_enough_frames() {
        let spec = WptSpectrogram::new(2, Tensor::zeros(vec![4, 3]).unwrap()).unwrap();
        assert!(matches!(time_avg_pool(&spec), Err(WaveletError::Precondition(_))));
    }

    #[test]
    fn quantize_constant() {
        let sa = AssistSpectrogram::new(Tensor::filled(vec![8, 8], -0.75).unwrap()).unwrap();
        let q = quantize(&sa);
        assert_eq!(q.payload_bytes(), 64);
        assert!(q.cells.iter().all(|&c| c == 0));
        assert_eq!(q.offset, -0.75);
        assert_eq!(dequantize(&q).unwrap(), sa);
    }

    #[test]
    fn quantize_error_within_one_step() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        for dim in [2usize, 8, 16] {
            let data: Vec<f32> = (0..dim * dim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let sa = AssistSpectrogram::new(Tensor::new(vec![dim, dim], data).unwrap()).unwrap();
            let q = quantize(&sa);
            let back = dequantize(&QuantizedSpectrogram::from_bytes(&q.to_bytes()).unwrap()).unwrap();
            let (min, max) = sa
                .grid()
                .data()
                .iter()
                .fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            let step = (max - min) / 255.0;
            for (a, b) in back.grid().data().iter().zip(sa.grid().data()) {
                assert!((a - b).abs() <= step * 1.0001);
            }
        }
    }

    #[test]
    fn refine_all_ones_mask_is_full_spectrum() {
        let clip = random_clip(5, 2048);
        let mask = SpectralAttentionMask::window(4, 0, 4).unwrap();
        let mr = refine_bands(&clip, &mask, 4, 16, 8, 8, Wavelet::Db4).unwrap();
        let full = wpt_decompose(&clip, 4, Wavelet::Db4).unwrap();
        let pooled = adaptive_avg_pool_time(full.matrix(), 8).unwrap();
        assert_eq!(mr.high, pooled);
        assert_eq!(mr.low.dims(), &[4, 8]);
    }

    #[test]
    fn refine_constant_signal_has_no_detail() {
        let clip = AudioClip::from_raw(vec![0.5; 1024], 16_000).unwrap();
        for start in 0..=6 {
            let mask = SpectralAttentionMask::window(8, start, 2).unwrap();
            let mr = refine_bands(&clip, &mask, 8, 32, 4, 4, Wavelet::Haar).unwrap();
            for (r, row) in mr.high.data().chunks(4).enumerate() {
                if start == 0 && r == 0 {
                    continue;
                }
                assert!(row.iter().all(|v| v.abs() < 1e-6), "start {start} row {r}");
            }
        }
    }

    #[test]
    fn refine_slices_full_decomposition() {
        let clip = random_clip(8, 8192);
        let mask = SpectralAttentionMask::window(8, 3, 2).unwrap();
        let mr = refine_bands(&clip, &mask, 16, 64, 16, 16, Wavelet::Db4).unwrap();
        assert_eq!(mr.high.dims(), &[16, 16]);
        assert_eq!(mr.window_start, 3);
        let full = wpt_decompose(&clip, 6, Wavelet::Db4).unwrap();
        let pooled = adaptive_avg_pool_time(full.matrix(), 16).unwrap();
        assert_eq!(mr.high.data(), &pooled.data()[24 * 16..40 * 16]);
    }

    #[test]
    fn refine_rejects_bad_masks_and_sizes() {
        let clip = random_clip(1, 1024);
        let gappy = SpectralAttentionMask::from_bits(vec![true, false, true, false]);
        assert!(matches!(
            refine_bands(&clip, &gappy, 4, 16, 4, 4, Wavelet::Haar),
            Err(WaveletError::Mask(_))
        ));
        let mask = SpectralAttentionMask::window(4, 0, 1).unwrap();
        assert!(refine_bands(&clip, &mask, 16, 8, 4, 4, Wavelet::Haar).is_err());
        assert!(refine_bands(&clip, &mask, 6, 16, 4, 4, Wavelet::Haar).is_err());
        let mask3 = SpectralAttentionMask::window(3, 0, 1).unwrap();
        assert!(refine_bands(&clip, &mask3, 4, 16, 4, 4, Wavelet::Haar).is_err());
    }
}
