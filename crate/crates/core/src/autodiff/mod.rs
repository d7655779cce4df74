//! Reverse-mode automatic differentiation over per-example tapes.
//!
//! A [`Tape`] records every operation as it is evaluated; calling
//! [`Tape::backward`] on a scalar node walks the records in reverse and fills
//! in gradients. Trainable tensors live in a [`ParameterStore`] and are copied
//! onto the tape on first use, so one store can serve many tapes at once.

mod check;
mod store;
mod tape;
mod tensor;

pub use check::{directional_check, grad_check, relative_error, GradCheckReport, DEFAULT_EPS};
pub use store::{ParamEntry, ParamId, ParameterStore};
pub use tape::{NodeId, OpKind, Tape, COSINE_EPS};
pub use tensor::{Shape, Tensor};

#[cfg(test)]
pub(crate) use tape::sigmoid;
pub(crate) use tensor::dot;
