//! Dense rank-1/rank-2 tensors with a reverse-mode differentiation graph.
//!
//! Values are `f64` throughout. A [`Graph`] records every operation in
//! creation order; [`Graph::backward`] walks that record in reverse and
//! accumulates gradients into every node that requires them.

mod check;
mod graph;
mod params;

use std::fmt;

pub use check::{grad_check, grad_check_params, relative_error};
pub use graph::{Axis, Graph, Var};
pub use params::{ParamId, ParamStore, Session};

/// Errors raised by tensor construction, graph operations and backward.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left} and {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
    #[error("masked_softmax: every position is masked")]
    AllMasked,
    #[error("backward: loss must be a scalar, got {0}")]
    NotScalar(Shape),
    #[error("backward: graph already differentiated; call zero_grad first")]
    BackwardTwice,
    #[error("grad_check: coordinate {coordinate}: {source}")]
    GradCheck {
        coordinate: usize,
        #[source]
        source: Box<TensorError>,
    },
    #[error("parameter '{0}' already registered")]
    DuplicateParam(String),
}

/// Shape of a tensor. Scalars are `Vector(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Shape::Vector(1))
    }

    /// `(rows, cols)`, treating a vector as a single row.
    pub fn as_rows(&self) -> (usize, usize) {
        match *self {
            Shape::Vector(n) => (1, n),
            Shape::Matrix(r, c) => (r, c),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "[{n}]"),
            Shape::Matrix(r, c) => write!(f, "[{r}, {c}]"),
        }
    }
}

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.len() != data.len() {
            return Err(TensorError::InvalidArgument {
                op: "tensor",
                detail: format!("shape {shape} needs {} values, got {}", shape.len(), data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor::vector(vec![x])
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Tensor::new(Shape::Matrix(rows, cols), data)
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(TensorError::InvalidArgument {
                    op: "from_rows",
                    detail: format!("ragged rows ({} vs {cols})", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::matrix(rows.len(), cols, data)
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a scalar tensor (first value otherwise).
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// Row `i` of a matrix; the whole vector for rank 1.
    pub fn row(&self, i: usize) -> &[f64] {
        let (_, cols) = self.shape.as_rows();
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn rows(&self) -> usize {
        self.shape.as_rows().0
    }

    pub fn cols(&self) -> usize {
        self.shape.as_rows().1
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
