use std::fmt;

use crate::tensor::TensorError;

#[derive(Debug)]
pub enum Error {
    Tensor(TensorError),
    Io(std::io::Error),
    InvalidSpec(String),
    InvalidArgument(String),
    UnknownScheme(String),
    BadMagic(String),
    VersionMismatch { expected: u32, found: u32 },
    TruncatedFile(String),
    CountMismatch { images: usize, labels: usize },
    LabelOutOfRange { label: usize, classes: usize },
    DataExhausted { iteration: usize },
    NonFinite(String),
    Diverged { epoch: usize },
    Degenerate(String),
    Config(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tensor(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
            Self::InvalidSpec(msg) => write!(f, "invalid model spec: {msg}"),
            Self::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Self::UnknownScheme(name) => write!(f, "unknown initialization scheme '{name}'"),
            Self::BadMagic(msg) => write!(f, "bad magic: {msg}"),
            Self::VersionMismatch { expected, found } => {
                write!(f, "version mismatch: expected {expected}, found {found}")
            }
            Self::TruncatedFile(what) => write!(f, "truncated file: {what}"),
            Self::CountMismatch { images, labels } => {
                write!(f, "count mismatch: {images} images vs {labels} labels")
            }
            Self::LabelOutOfRange { label, classes } => {
                write!(f, "label out of range: {label} (classes: {classes})")
            }
            Self::DataExhausted { iteration } => {
                write!(f, "data source exhausted at iteration {iteration}")
            }
            Self::NonFinite(what) => write!(f, "non-finite value: {what}"),
            Self::Diverged { epoch } => write!(f, "training diverged in epoch {epoch}"),
            Self::Degenerate(msg) => write!(f, "degenerate instance: {msg}"),
            Self::Config(msg) => write!(f, "config error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Tensor(e) => Some(e),
            Self::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<TensorError> for Error {
    fn from(e: TensorError) -> Self {
        Error::Tensor(e)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
