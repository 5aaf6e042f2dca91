//! Minimal dense numerical kernel: matrices, batched products,
//! reverse-mode gradient tape and the Adam update rule.

pub mod adam;
pub(crate) mod gemm;
pub mod matrix;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use matrix::DenseMatrix;
pub use tape::{linear_forward, Activation, GradientTape, NodeId, SELU_ALPHA, SELU_LAMBDA};
