//! Dense tensor arithmetic with a reverse-mode gradient tape.
//!
//! Tensors are row-major, dynamically ranked, and generic over the scalar
//! type: training runs in `f32`, gradient verification re-runs the same code
//! in `f64` (see [`gradcheck`]). All reductions use a fixed sequential order
//! in flat-index space so results are bit-identical across runs of one build.

#![allow(clippy::needless_range_loop)]

mod gradcheck;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

/// Errors raised by tensor construction and tape operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index {index} out of range for dimension of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("expected a scalar tensor, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid axis {axis} for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Scalar element type of a tensor. Implemented for `f32` and `f64`.
pub trait Scalar:
    num_traits::Float + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn from_f32(v: f32) -> Self;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f32(v: f32) -> Self {
        v
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Build a tensor from a shape and row-major data. The data length must
    /// equal the product of the dimensions, and every dimension must be > 0.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(TensorError::ShapeMismatch(format!(
                "zero-sized dimension in shape {shape:?}"
            )));
        }
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(TensorError::ShapeMismatch(format!(
                "shape {shape:?} needs {expect} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); n],
        }
    }

    pub fn scalar(v: S) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn from_vec(data: Vec<S>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// True when the tensor holds exactly one element.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> Result<S> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(TensorError::NotScalar(self.shape.clone()))
        }
    }

    /// Rows of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[S] {
        let cols = *self.shape.last().unwrap();
        &self.data[i * cols..(i + 1) * cols]
    }

    /// Flags the first NaN or infinity, if any.
    pub fn check_finite(&self) -> std::result::Result<(), TensorError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(TensorError::NonFinite {
                index: i,
                value: self.data[i].as_f64(),
            }),
        }
    }

    /// Casts element-by-element into another scalar type.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.as_f64())).collect(),
        }
    }

    pub(crate) fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Row-major strides for a shape.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Broadcast rule: shapes are right-aligned and padded with leading 1s; a
/// dimension of size 1 may expand only if every smaller-indexed dimension of
/// that operand is also broadcast or equal-at-1. Trailing size-1 expansion
/// (e.g. `[E,1] * [E,d]`) is rejected so shape bugs surface early.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize], d: usize| -> usize {
        let off = rank - s.len();
        if d < off {
            1
        } else {
            s[d - off]
        }
    };
    let mut out = Vec::with_capacity(rank);
    for d in 0..rank {
        let (da, db) = (pad(a, d), pad(b, d));
        if da == db {
            out.push(da);
        } else if da == 1 {
            out.push(db);
        } else if db == 1 {
            out.push(da);
        } else {
            return Err(TensorError::ShapeMismatch(format!(
                "cannot broadcast {a:?} with {b:?}"
            )));
        }
    }
    for (name, s) in [("lhs", a), ("rhs", b)] {
        let mut seen_exact = false;
        for d in 0..rank {
            let ds = pad(s, d);
            if ds == out[d] {
                if out[d] > 1 {
                    seen_exact = true;
                }
            } else if ds == 1 && seen_exact {
                return Err(TensorError::ShapeMismatch(format!(
                    "{name} shape {s:?} broadcasts a non-leading dimension against {out:?}"
                )));
            }
        }
    }
    Ok(out)
}

/// Maps a flat index in `out_shape` to the flat index in `src_shape`,
/// treating size-1 source dimensions as pinned to 0.
pub(crate) fn broadcast_src_index(
    out_idx: usize,
    out_shape: &[usize],
    out_strides: &[usize],
    src_shape: &[usize],
    src_strides: &[usize],
) -> usize {
    let off = out_shape.len() - src_shape.len();
    let mut rem = out_idx;
    let mut src = 0usize;
    for d in 0..out_shape.len() {
        let c = rem / out_strides[d];
        rem %= out_strides[d];
        if d >= off {
            let sd = d - off;
            if src_shape[sd] != 1 {
                src += c * src_strides[sd];
            }
        }
    }
    src
}
