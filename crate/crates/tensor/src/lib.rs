//! Reverse-mode automatic differentiation over dense `f64` tensors in NCHW
//! layout.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Calling
//! [`Tape::backward`] on a scalar-valued variable walks the record in reverse
//! and returns the accumulated [`Gradients`] for every leaf created with
//! [`Tape::param`].
//!
//! Kernels that touch whole planes (convolution, pooling, sampling) split
//! their work into independent output chunks. With the `parallel` feature
//! those chunks run on the rayon pool; otherwise, or after
//! [`par::set_parallel`]`(false)`, they run sequentially. Every output
//! element is reduced in the same order either way, so both paths produce
//! bit-identical results.

pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod par;
mod tape;
mod tensor;

pub use ops::conv::PadMode;
pub use tape::{BackwardFn, Gradients, Tape, Var};
pub use tensor::{Shape, Tensor};
