//! Dense tensors with a reverse-mode autodiff tape.
//!
//! Layout is NCHW and row-major throughout. Training runs in `f32`; gradient
//! checks run in `f64` against central differences.

pub mod error;
pub mod gradcheck;
pub mod init;
mod kernels;
pub mod real;
pub mod rng;
pub mod shape;
pub mod sptn;
pub mod suite;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_many, GradReport};
pub use init::{init_param, InitScheme};
pub use real::Real;
pub use shape::Pool;
pub use sptn::SptnArray;
pub use tape::{Activation, BackwardMode, Tape, Var};
pub use tensor::{DType, Tensor};
