//! Dense numerics: matrices, layer primitives with backward passes, L1 loss,
//! Adam, finite-difference checks and the `TEN1` tensor container.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod rng;
pub mod tensor_file;

pub use adam::{adam_step, AdamConfig, AdamState, Param};
pub use layers::Mode;
pub use matrix::{gemm, matmul, Matrix, Op};
