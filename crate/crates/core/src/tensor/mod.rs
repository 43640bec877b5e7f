//! Dense NCHW tensors and the reverse-mode machinery built on them.
//!
//! [`Tensor`] is a plain value type. Differentiable computation happens on a
//! [`Graph`], which records every operation applied to its [`Var`] handles and
//! replays them in reverse on [`Graph::backward`]. Trainable state lives in a
//! [`ParamStore`] and enters a graph through [`Graph::param`].

mod graph;
pub mod gradcheck;
pub mod io;
pub(crate) mod kernels;
mod params;
pub mod precision;

pub use graph::{EltwiseOp, Gradients, Graph, Var};
#[doc(hidden)]
pub use graph::{with_corrupted_rule, CorruptRule};
pub use params::{ParamId, ParamStore, Parameter};

use thiserror::Error;

/// `(batch, channel, height, width)`.
pub type Shape = [usize; 4];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("{op}: {msg}")]
    Precondition { op: &'static str, msg: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Shape),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Shape, len: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
}

impl TensorError {
    pub(crate) fn precondition(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Precondition { op, msg: msg.into() }
    }
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

pub fn numel(shape: &Shape) -> usize {
    shape.iter().product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
    pub requires_grad: bool,
    /// Populated for parameters after a backward pass.
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != numel(&shape) {
            return Err(TensorError::DataLength { shape, len: data.len() });
        }
        Ok(Tensor { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor { shape, data: vec![value; numel(&shape)], requires_grad: false, grad: None }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full([1, 1, 1, 1], value)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(numel(&shape));
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(ni, ci, y, x));
                    }
                }
            }
        }
        Tensor { shape, data, requires_grad: false, grad: None }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((n * cs + c) * hs + y) * ws + x
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f64) {
        let i = self.offset(n, c, y, x);
        self.data[i] = value;
    }

    /// Value of a `[1, 1, 1, 1]` tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape));
        }
        Ok(self.data[0])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
            grad: None,
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch { op, left: self.shape, right: other.shape });
        }
        Ok(Tensor {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            requires_grad: false,
            grad: None,
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channels `start..start + len`, copied into a new tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if start + len > c {
            return Err(TensorError::precondition(
                "slice_channels",
                format!("range {start}..{} exceeds {c} channels", start + len),
            ));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * len * plane);
        for ni in 0..n {
            let base = (ni * c + start) * plane;
            data.extend_from_slice(&self.data[base..base + len * plane]);
        }
        Tensor::new([n, len, h, w], data)
    }

    /// One batch entry as a `[1, c, h, w]` tensor.
    pub fn batch_item(&self, index: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if index >= n {
            return Err(TensorError::precondition("batch_item", format!("index {index} >= batch {n}")));
        }
        let len = c * h * w;
        Tensor::new([1, c, h, w], self.data[index * len..(index + 1) * len].to_vec())
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack_batch(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::precondition("stack_batch", "no tensors to stack"))?;
        let [_, c, h, w] = first.shape;
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            if p.shape[1..] != first.shape[1..] {
                return Err(TensorError::ShapeMismatch { op: "stack_batch", left: first.shape, right: p.shape });
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Tensor::new([n, c, h, w], data)
    }
}
