//! Dense f64 tensors, a reverse-mode tape and Adam.

mod adam;
pub mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
