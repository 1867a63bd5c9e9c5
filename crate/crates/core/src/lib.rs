//! Feature distillation between frozen embedding extractors and the
//! non-training evaluation protocol used to compare them.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for common uses. Embeddings are stored on disk as
//! `f32` and promoted on load.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod distill;
pub mod embedstore;
pub mod error;
pub mod evalbench;
pub mod matrix;
pub mod robustness;
pub mod scalar;
pub mod simmetrics;

pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type DistillModel64 = distill::DistillModel<f64>;
pub type DistillModel32 = distill::DistillModel<f32>;
pub type DistillHead64 = distill::DistillHead<f64>;
pub type PcaModel64 = evalbench::PcaModel<f64>;
