//! Dense tensors with a reverse-mode differentiation tape.
//!
//! A [`Tensor`] is an immutable, row-major buffer with a shape and a dtype tag.
//! Tensors created through [`Tape::leaf`] (and everything computed from them)
//! carry a handle into the tape; operations on such tensors are recorded so
//! that [`Tape::backward`] can propagate adjoints. A backward pass run with
//! `create_graph = true` expresses every adjoint with recorded operations, so
//! the returned gradients can themselves be differentiated.
//!
//! Values are stored as `f64`. Tensors tagged [`DType::F32`] round every
//! produced element to single precision, which keeps the storage uniform while
//! reproducing f32 value semantics for training runs.

mod check;
mod kernels;
mod ops;
mod tape;

use std::fmt;
use std::sync::Arc;

pub use check::grad_check;
pub use kernels::ConvGeom;
pub use tape::Tape;

pub(crate) use tape::NodeRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DType {
    F32,
    #[default]
    F64,
}

impl DType {
    #[inline]
    pub(crate) fn round(self, v: f64) -> f64 {
        match self {
            DType::F32 => v as f32 as f64,
            DType::F64 => v,
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DType::F32 => write!(f, "f32"),
            DType::F64 => write!(f, "f64"),
        }
    }
}

impl std::str::FromStr for DType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "f32" => Ok(DType::F32),
            "f64" => Ok(DType::F64),
            other => Err(format!("unknown dtype '{other}' (expected f32 or f64)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },
    DTypeMismatch {
        op: &'static str,
        lhs: DType,
        rhs: DType,
    },
    NotScalar(Vec<usize>),
    NotOnTape,
    TapeMismatch,
    LabelOutOfRange {
        label: usize,
        classes: usize,
    },
    NonFinite(String),
    InvalidArgument(String),
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "shape mismatch in {op}: {lhs:?} vs {rhs:?}")
            }
            Self::InvalidShape { op, shape, reason } => {
                write!(f, "invalid shape {shape:?} for {op}: {reason}")
            }
            Self::DTypeMismatch { op, lhs, rhs } => {
                write!(f, "dtype mismatch in {op}: {lhs} vs {rhs}")
            }
            Self::NotScalar(shape) => write!(f, "expected a scalar, got shape {shape:?}"),
            Self::NotOnTape => write!(f, "tensor is not recorded on the tape"),
            Self::TapeMismatch => write!(f, "tensors belong to different tapes"),
            Self::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Self::NonFinite(what) => write!(f, "non-finite value: {what}"),
            Self::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl std::error::Error for TensorError {}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone)]
pub struct Tensor {
    shape: Arc<[usize]>,
    data: Arc<[f64]>,
    dtype: DType,
    node: Option<NodeRef>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("dtype", &self.dtype)
            .field("recorded", &self.node.is_some())
            .finish()
    }
}

impl Tensor {
    /// Builds an f64 tensor, checking that the buffer matches the shape.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::with_dtype(shape, data, DType::F64)
    }

    pub fn with_dtype(shape: &[usize], data: Vec<f64>, dtype: DType) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::InvalidShape {
                op: "new",
                shape: shape.to_vec(),
                reason: format!("buffer holds {} values", data.len()),
            });
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::InvalidShape {
                op: "new",
                shape: shape.to_vec(),
                reason: "extents must be positive".into(),
            });
        }
        let data = match dtype {
            DType::F64 => data,
            DType::F32 => data.into_iter().map(|v| dtype.round(v)).collect(),
        };
        Ok(Self::from_parts(shape, data, dtype))
    }

    /// Shape and length are trusted; values are assumed already rounded.
    pub(crate) fn from_parts(shape: &[usize], data: Vec<f64>, dtype: DType) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape: shape.into(),
            data: data.into(),
            dtype,
            node: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(&[], vec![value], DType::F64)
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::from_parts(&[n], data, DType::F64)
    }

    pub fn zeros(shape: &[usize], dtype: DType) -> Self {
        Self::full(shape, 0.0, dtype)
    }

    pub fn ones(shape: &[usize], dtype: DType) -> Self {
        Self::full(shape, 1.0, dtype)
    }

    pub fn full(shape: &[usize], value: f64, dtype: DType) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape, vec![dtype.round(value); n], dtype)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.to_vec()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape.to_vec()));
        }
        Ok(self.data[0])
    }

    /// True when this tensor participates in a tape (it requires gradients).
    pub fn is_recorded(&self) -> bool {
        self.node.is_some()
    }

    /// Same values, cut from the tape.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.clone(),
            dtype: self.dtype,
            node: None,
        }
    }

    /// Converts to another dtype; the result is detached.
    pub fn cast(&self, dtype: DType) -> Tensor {
        if dtype == self.dtype {
            return self.detach();
        }
        let data = self.data.iter().map(|&v| dtype.round(v)).collect();
        Self::from_parts(&self.shape, data, dtype)
    }

    /// Copies the leading-axis entries listed in `rows` into a new detached tensor.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Tensor> {
        if self.rank() == 0 {
            return Err(TensorError::InvalidShape {
                op: "select_rows",
                shape: self.shape.to_vec(),
                reason: "needs at least one axis".into(),
            });
        }
        let n = self.shape[0];
        let stride = self.numel() / n;
        let mut out = Vec::with_capacity(rows.len() * stride);
        for &r in rows {
            if r >= n {
                return Err(TensorError::InvalidShape {
                    op: "select_rows",
                    shape: self.shape.to_vec(),
                    reason: format!("row {r} out of range"),
                });
            }
            out.extend_from_slice(&self.data[r * stride..(r + 1) * stride]);
        }
        let mut shape = self.shape.to_vec();
        shape[0] = rows.len();
        if rows.is_empty() {
            return Err(TensorError::InvalidShape {
                op: "select_rows",
                shape,
                reason: "empty selection".into(),
            });
        }
        Ok(Self::from_parts(&shape, out, self.dtype))
    }

    /// Bitwise equality of shape, dtype and values.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self.dtype == other.dtype
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub(crate) fn node(&self) -> Option<&NodeRef> {
        self.node.as_ref()
    }

    pub(crate) fn with_node(mut self, node: NodeRef) -> Tensor {
        self.node = Some(node);
        self
    }
}
