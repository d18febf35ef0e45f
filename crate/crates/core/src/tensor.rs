//! Dense tensor values.
//!
//! A [`Tensor`] is an immutable multi-dimensional array of `f64` in row-major
//! order. All numeric work in this crate flows through these values; once a
//! tensor has been produced it is never mutated in place (the optimizer builds
//! replacement tensors), which makes values safe to share across threads.

use std::fmt;

/// Errors raised by tensor and graph operations.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Input shapes are invalid for the named primitive.
    ShapeMismatch {
        primitive: &'static str,
        detail: String,
    },
    /// A primitive name was not recognized by the dispatcher.
    UnknownPrimitive(String),
    /// A forward evaluation produced NaN or infinity.
    NumericFault {
        primitive: &'static str,
        detail: String,
    },
    /// `backward` was asked to differentiate a non-scalar node.
    NonScalarLoss { shape: Vec<usize> },
    /// A leaf changed after the forward pass; the graph must be refreshed.
    UnevaluatedGraph,
    /// A node id does not belong to the graph it was used with.
    InvalidNode { id: usize, len: usize },
    /// A transposed convolution cannot reach the requested output shape.
    UnreachableTargetShape {
        input: Vec<usize>,
        target: Vec<usize>,
    },
    /// A scalar attribute is outside its legal range (stride, keep rate, ...).
    InvalidAttribute {
        primitive: &'static str,
        detail: String,
    },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { primitive, detail } => {
                write!(f, "shape mismatch in `{primitive}`: {detail}")
            }
            TensorError::UnknownPrimitive(name) => write!(f, "unknown primitive `{name}`"),
            TensorError::NumericFault { primitive, detail } => {
                write!(f, "numeric fault in `{primitive}`: {detail}")
            }
            TensorError::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            TensorError::UnevaluatedGraph => {
                write!(f, "graph has stale values; call refresh() after set_leaf()")
            }
            TensorError::InvalidNode { id, len } => {
                write!(f, "node id {id} out of range for graph of {len} nodes")
            }
            TensorError::UnreachableTargetShape { input, target } => write!(
                f,
                "transposed convolution cannot map input {input:?} to target {target:?}"
            ),
            TensorError::InvalidAttribute { primitive, detail } => {
                write!(f, "invalid attribute for `{primitive}`: {detail}")
            }
        }
    }
}

impl std::error::Error for TensorError {}

/// Dense multi-dimensional array of `f64`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from a shape and flat row-major data.
    ///
    /// Panics if `product(shape) != data.len()`; that is a programming error,
    /// not a runtime condition.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor shape {shape:?} needs {numel} values, got {}",
            data.len()
        );
        Tensor { shape, data }
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    /// All-one tensor of the given shape.
    pub fn ones(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![1.0; numel],
        }
    }

    /// Rank-0-like scalar, stored as shape `[1]`.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// 1-D tensor from a slice.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// True when the tensor holds exactly one value.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar tensor.
    ///
    /// Panics when the tensor is not scalar-shaped.
    pub fn scalar_value(&self) -> f64 {
        assert!(
            self.is_scalar(),
            "scalar_value on tensor of shape {:?}",
            self.shape
        );
        self.data[0]
    }

    /// Index of the first NaN/Inf entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    /// Same data viewed under a new shape. Panics on element-count mismatch.
    pub fn reshaped(&self, shape: Vec<usize>) -> Tensor {
        Tensor::new(shape, self.data.clone())
    }

    /// Maximum absolute difference against another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
