//! Dense row-major tensors over `f32` or `f64`.
//!
//! Every image, feature map, weight and gradient in the engine is a
//! [`Tensor`]. The layout is always contiguous row-major; strides are derived
//! from the shape and never stored.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}: every extent must be at least 1")]
    InvalidShape(Vec<usize>),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("length mismatch: shape {shape:?} needs {expected} values, got {actual}")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
}

/// Scalar element type. Implemented for `f32` (training and inference) and
/// `f64` (finite-difference gradient checks).
pub trait Real:
    Float
    + Default
    + Debug
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Serialize
    + for<'de> Deserialize<'de>
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C = alpha * A * B + beta * C` with explicit row/column strides.
    ///
    /// `a` is m x k, `b` is k x n, `c` is m x n.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );
}

fn check_extent(len: usize, rows: usize, cols: usize, strides: (isize, isize)) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) as isize * strides.0 + (cols - 1) as isize * strides.1;
    assert!(
        strides.0 >= 0 && strides.1 >= 0 && (last as usize) < len,
        "gemm operand out of bounds"
    );
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                check_extent(a.len(), m, k, a_strides);
                check_extent(b.len(), k, n, b_strides);
                check_extent(c.len(), m, n, c_strides);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: all three operands were bounds-checked above for
                // the given dimensions and non-negative strides.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Tensor<T: Real = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub(crate) fn validate_shape(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

/// Row-major strides for `shape`.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

impl<T: Real> Tensor<T> {
    /// Tensor of the given shape with every element equal to `fill`.
    pub fn create(shape: &[usize], fill: T) -> Result<Self, TensorError> {
        let len = validate_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![fill; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self, TensorError> {
        Self::create(shape, T::zero())
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, TensorError> {
        let len = validate_shape(shape)?;
        if len != data.len() {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                expected: len,
                actual: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Zero tensor with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    /// Flat offset of a coordinate. Panics if the coordinate is out of range.
    pub fn offset(&self, coord: &[usize]) -> usize {
        assert_eq!(coord.len(), self.shape.len(), "coordinate rank mismatch");
        let mut off = 0;
        let mut stride = 1;
        for (&c, &extent) in coord.iter().zip(&self.shape).rev() {
            assert!(c < extent, "coordinate {coord:?} out of range");
            off += c * stride;
            stride *= extent;
        }
        off
    }

    /// Inverse of [`Tensor::offset`].
    pub fn coord(&self, mut offset: usize) -> Vec<usize> {
        assert!(offset < self.data.len(), "offset out of range");
        let mut coord = vec![0; self.shape.len()];
        for (c, &extent) in coord.iter_mut().zip(&self.shape).rev() {
            *c = offset % extent;
            offset /= extent;
        }
        coord
    }

    pub fn get(&self, coord: &[usize]) -> T {
        self.data[self.offset(coord)]
    }

    pub fn set(&mut self, coord: &[usize], value: T) {
        let off = self.offset(coord);
        self.data[off] = value;
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        let len = validate_shape(shape)?;
        if len != self.data.len() {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                expected: len,
                actual: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|x| x.as_f64()).sum()
    }

    /// Element type conversion through `f64`.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.as_f64())).collect(),
        }
    }
}

/// Tensor of i.i.d. Gaussian samples. Advances `rng`.
pub fn random_normal<T: Real>(
    rng: &mut RngStream,
    shape: &[usize],
    mean: f64,
    std: f64,
) -> Result<Tensor<T>, TensorError> {
    if !(std >= 0.0) || !std.is_finite() || !mean.is_finite() {
        return Err(TensorError::InvalidParameter(format!(
            "normal distribution needs finite mean and std >= 0, got mean={mean} std={std}"
        )));
    }
    let len = validate_shape(shape)?;
    let data = (0..len)
        .map(|_| T::from_f64(mean + std * rng.standard_normal()))
        .collect();
    Tensor::from_vec(shape, data)
}

/// Tensor of i.i.d. samples from `[lo, hi)`. Advances `rng`.
pub fn random_uniform<T: Real>(
    rng: &mut RngStream,
    shape: &[usize],
    lo: f64,
    hi: f64,
) -> Result<Tensor<T>, TensorError> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(TensorError::InvalidParameter(format!(
            "uniform range needs finite lo <= hi, got [{lo}, {hi})"
        )));
    }
    let len = validate_shape(shape)?;
    let data = (0..len)
        .map(|_| {
            let v = T::from_f64(rng.uniform(lo, hi));
            // rounding into f32 can land exactly on `hi`
            if lo < hi && v >= T::from_f64(hi) {
                T::from_f64(lo)
            } else {
                v
            }
        })
        .collect();
    Tensor::from_vec(shape, data)
}
