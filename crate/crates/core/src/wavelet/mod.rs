//! Wavelet packet front end.
//!
//! A clip is split by a full binary filter bank of depth `n` into `2^n`
//! equal-width bands. Leaves are reordered into sequency order so that row
//! `b` of a [`WptSpectrogram`] is the `b`-th band by increasing frequency,
//! which is what the band masks index into.

mod spectrogram;
mod wav;

pub use spectrogram::{
    dequantize, low_resolution, quantize, refine_bands, time_avg_pool, AssistSpectrogram, MultiResInput,
    QuantizedSpectrogram,
};
pub use wav::{encode_wav, load_wav};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

/// Deepest decomposition supported; loaders pad clips to a multiple of
/// `2^MAX_DEPTH` samples.
pub const MAX_DEPTH: u32 = 10;

pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveletError {
    #[error("wav format: {0}")]
    Format(String),
    #[error("depth {depth} invalid for a clip of {len} samples")]
    Depth { depth: u32, len: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid mask: {0}")]
    Mask(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, WaveletError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wavelet {
    Haar,
    #[default]
    Db4,
}

const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

// Daubechies, 4 vanishing moments (8 taps), scaling coefficients.
const DB4: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

impl Wavelet {
    pub fn lowpass(self) -> &'static [f64] {
        match self {
            Wavelet::Haar => &HAAR,
            Wavelet::Db4 => &DB4,
        }
    }

    /// Quadrature mirror of the lowpass: `g[k] = (-1)^k h[L-1-k]`.
    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let l = h.len();
        (0..l)
            .map(|k| if k % 2 == 0 { h[l - 1 - k] } else { -h[l - 1 - k] })
            .collect()
    }
}

impl std::str::FromStr for Wavelet {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "haar" => Ok(Wavelet::Haar),
            "db4" => Ok(Wavelet::Db4),
            other => Err(format!("unknown wavelet `{other}` (expected haar or db4)")),
        }
    }
}

/// Mono audio with samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate_hz: u32,
}

impl AudioClip {
    /// Zero-pads `samples` at the end to a multiple of `2^MAX_DEPTH`.
    pub fn padded(mut samples: Vec<f32>, sample_rate_hz: u32) -> Result<Self> {
        let block = 1usize << MAX_DEPTH;
        let len = samples.len().div_ceil(block) * block;
        samples.resize(len, 0.0);
        Self::from_raw(samples, sample_rate_hz)
    }

    /// Wraps samples as-is, without padding.
    pub fn from_raw(samples: Vec<f32>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(WaveletError::Precondition("empty clip".into()));
        }
        if sample_rate_hz == 0 {
            return Err(WaveletError::Precondition("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|&v| (v as f64) * (v as f64)).sum()
    }
}

/// Band × frame coefficient matrix of a depth-`n` packet decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct WptSpectrogram {
    depth: u32,
    matrix: Tensor,
}

impl WptSpectrogram {
    pub fn new(depth: u32, matrix: Tensor) -> Result<Self> {
        if matrix.rank() != 2 || matrix.dims()[0] != 1usize << depth {
            return Err(WaveletError::Precondition(format!(
                "depth {depth} spectrogram needs {} rows, got dims {:?}",
                1usize << depth,
                matrix.dims()
            )));
        }
        Ok(Self { depth, matrix })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn bands(&self) -> usize {
        self.matrix.dims()[0]
    }

    pub fn frames(&self) -> usize {
        self.matrix.dims()[1]
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn row(&self, band: usize) -> &[f32] {
        let f = self.frames();
        &self.matrix.data()[band * f..(band + 1) * f]
    }

    pub fn energy(&self) -> f64 {
        self.matrix.data().iter().map(|&v| (v as f64) * (v as f64)).sum()
    }
}

/// Binary-reflected Gray code; leaf `gray(b)` of the natural tree holds band `b`.
fn gray(b: usize) -> usize {
    b ^ (b >> 1)
}

fn analysis_step(x: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for i in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for (k, (hl, hh)) in lo.iter().zip(hi).enumerate() {
            let v = x[(2 * i + k) % n];
            sa += hl * v;
            sd += hh * v;
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = a.len() * 2;
    let mut x = vec![0.0; n];
    for i in 0..a.len() {
        for (k, (hl, hh)) in lo.iter().zip(hi).enumerate() {
            x[(2 * i + k) % n] += hl * a[i] + hh * d[i];
        }
    }
    x
}

fn check_depth(depth: u32, len: usize) -> Result<()> {
    if depth == 0 || depth > MAX_DEPTH || !len.is_multiple_of(1usize << depth) || len < (1usize << depth) {
        return Err(WaveletError::Depth { depth, len });
    }
    Ok(())
}

/// Full depth-`n` wavelet packet decomposition with periodic extension.
pub fn wpt_decompose(clip: &AudioClip, depth: u32, wavelet: Wavelet) -> Result<WptSpectrogram> {
    check_depth(depth, clip.len())?;
    let lo = wavelet.lowpass();
    let hi = wavelet.highpass();
    let mut nodes: Vec<Vec<f64>> = vec![clip.samples().iter().map(|&v| v as f64).collect()];
    for _ in 0..depth {
        nodes = nodes
            .iter()
            .flat_map(|node| {
                let (a, d) = analysis_step(node, lo, &hi);
                [a, d]
            })
            .collect();
    }
    let bands = nodes.len();
    let frames = nodes[0].len();
    let mut data = Vec::with_capacity(bands * frames);
    for b in 0..bands {
        data.extend(nodes[gray(b)].iter().map(|&v| v as f32));
    }
    WptSpectrogram::new(depth, Tensor::new(vec![bands, frames], data)?)
}

/// Inverse of [`wpt_decompose`].
pub fn wpt_reconstruct(spec: &WptSpectrogram, wavelet: Wavelet, sample_rate_hz: u32) -> Result<AudioClip> {
    let lo = wavelet.lowpass();
    let hi = wavelet.highpass();
    let bands = spec.bands();
    let mut nodes = vec![Vec::new(); bands];
    for b in 0..bands {
        nodes[gray(b)] = spec.row(b).iter().map(|&v| v as f64).collect();
    }
    while nodes.len() > 1 {
        nodes = nodes
            .chunks_exact(2)
            .map(|pair| synthesis_step(&pair[0], &pair[1], lo, &hi))
            .collect();
    }
    let samples = nodes.pop().unwrap().into_iter().map(|v| v as f32).collect();
    AudioClip::from_raw(samples, sample_rate_hz)
}
