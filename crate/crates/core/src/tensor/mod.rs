//! Dense f32 tensors and the handful of forward-pass primitives the cloud and
//! edge models are built from.
//!
//! Everything here is a pure function over immutable inputs. Layouts are
//! row-major; feature maps are `[channels, height, width]`.

mod ops;
mod weights;

pub use ops::{
    adaptive_avg_pool2d, adaptive_avg_pool_time, adaptive_windows, argmax, avg_pool2d, conv2d, linear, matmul, relu,
    softmax,
};
pub(crate) use ops::{project, softmax_rows};
pub use weights::{load_weights, save_weights, WeightInit, WeightStore};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("missing weight `{0}`")]
    MissingWeight(String),
    #[error("invalid weight name {0:?}")]
    InvalidName(String),
    #[error("duplicate weight `{0}`")]
    DuplicateWeight(String),
    #[error("weight decode error at offset {offset}: {reason}")]
    Decode { offset: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(TensorError::Shape(msg.into()))
}

/// Row-major f32 tensor of rank 1 to 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub const MAX_RANK: usize = 4;

    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > Self::MAX_RANK {
            return shape_err(format!("rank {} outside 1..=4", dims.len()));
        }
        if dims.contains(&0) {
            return shape_err(format!("zero-sized dimension in {dims:?}"));
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TensorError::Shape(format!("dims {dims:?} overflow")))?;
        if len != data.len() {
            return shape_err(format!("dims {dims:?} need {len} values, got {}", data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Vec<usize>, value: f32) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(dims, vec![value; len])
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data)
    }

    /// Fails unless the dims are exactly `expected`.
    pub fn expect_dims(&self, expected: &[usize], what: &str) -> Result<()> {
        if self.dims != expected {
            return shape_err(format!("{what}: expected dims {expected:?}, got {:?}", self.dims));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Value at a multi-index. Panics on out-of-range indices.
    pub fn at(&self, idx: &[usize]) -> f32 {
        self.data[self.offset(idx)]
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.dims.len(), "index rank mismatch");
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {i} out of range {d}");
            acc * d + i
        })
    }

    /// Concatenates `[C_a,H,W]` and `[C_b,H,W]` along the channel axis.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 3 || other.rank() != 3 || self.dims[1..] != other.dims[1..] {
            return shape_err(format!("channel concat of {:?} and {:?}", self.dims, other.dims));
        }
        let mut data = Vec::with_capacity(self.len() + other.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Tensor::new(vec![self.dims[0] + other.dims[0], self.dims[1], self.dims[2]], data)
    }
}
