//! Minimal reverse-mode automatic differentiation over `f64` matrices.

pub mod adam;
mod batch;
pub mod checkpoint;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use batch::{apply_step, batch_gradients};
pub use gradcheck::{check_gradients, check_gradients_in_mode, GradCheckReport};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{gelu, sigmoid, Tape, Var};
pub use tensor::Tensor;
