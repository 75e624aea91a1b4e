//! Federated low-rank matrix factorization.
//!
//! A simulated federation of `N` clients, each holding a row block `S^i` of
//! a global matrix `S`, builds a shared right factor `V = (SᵀS)^α SᵀΦ` by
//! distributed randomized power iteration with masked aggregation. Each
//! client then fits its own left factor `U^i` against the fixed `V`, either
//! in closed form or by (accelerated) gradient descent, without further
//! communication. The crate also evaluates the closed-form error and
//! condition-number bounds that govern this scheme.

pub mod bounds;
pub mod datagen;
pub mod error;
pub mod federation;
pub mod ingest;
pub mod matrix;
pub mod resampler;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, Spectrum};
