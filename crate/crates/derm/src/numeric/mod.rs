//! Minimal dense linear algebra and seeded random sampling.
//!
//! Everything is `f64`; matrices are row-major and immutable once
//! constructed. No BLAS — at the row/feature counts this crate targets,
//! naive loops are fast enough and keep results bit-reproducible.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::{derive_seed, Rng};
