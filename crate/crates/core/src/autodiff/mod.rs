//! Minimal reverse-mode differentiation over dense double-precision matrices.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{CustomBackward, Gradients, Tape, Var, EMPTY_MASS};
pub use tensor::Tensor;
