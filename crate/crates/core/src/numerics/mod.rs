//! Dense matrices, a define-by-run differentiation tape and a
//! finite-difference gradient checker.

mod gradcheck;
mod matrix;
pub mod ops;
mod tape;

pub use gradcheck::{grad_check, ParamSet, ParamVars};
pub use matrix::{argmax, dot, Matrix};
pub use ops::{leaky_relu, log_softmax_rows, sigmoid, softmax_rows, LOG_FLOOR};
pub use tape::{Gradients, Tape, Var};
