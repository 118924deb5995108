//! A small dense-tensor autodiff kernel.
//!
//! Values are double precision matrices recorded on a [`Tape`]; a single
//! reverse sweep produces exact gradients for every trainable leaf. The op
//! set is the one needed by the graph layers and the contrastive loss, no
//! more.

mod check;
mod tape;
mod tensor;

pub use check::{grad_check, GradCheckReport, REL_ERROR_FLOOR};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
