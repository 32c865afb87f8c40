pub mod data;
pub mod error;
pub mod gradmetrics;
pub mod harness;
pub mod nio;
pub mod nn;
pub mod oracle;
pub mod tensor;

pub use error::{Error, Result};
pub use nn::{build_params, forward_loss, InitScheme, LayerSpec, ModelSpec, ParamSet};
pub use tensor::{grad_check, DType, Tape, Tensor, TensorError};
