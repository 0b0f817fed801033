//! Differentiable operations, implemented as methods on [`Var`](crate::Var).

mod binary;
pub mod conv;
mod norm;
mod pool;
mod reduce;
mod resize;
mod sample;
mod shape;
mod unary;

pub use norm::BatchStats;
