//! Tape-based reverse-mode differentiation over dense tensors.

mod broadcast;
mod gradcheck;
mod tape;

pub use gradcheck::{gradcheck, gradcheck_coords, relative_error, GradcheckFailure, GradcheckReport, REL_ERROR_FLOOR};
pub use tape::{ElementwiseOp, Gradients, ReduceOp, Tape, Var};

pub(crate) use tape::softplus;
