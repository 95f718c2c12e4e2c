//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Broadcasting follows trailing-axis alignment: shapes are right-aligned and
//! each axis pair must be equal or contain a 1, which is then expanded.
//! Anything else is a shape error.

mod check;
mod graph;
pub mod kernels;
mod tensor;

pub use check::{grad_check, GradCheckReport};
pub use graph::{Graph, Var};
pub use tensor::Tensor;
