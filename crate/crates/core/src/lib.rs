//! Numerical workbench for quantitative homogenization of elliptic systems
//! with almost-periodic coefficients.

pub mod campanato;
pub mod corrector;
pub mod discrete;
pub mod error;
pub mod field;
pub mod homogenize;
pub mod solver;

pub use error::{Error, Result};
pub use field::{CoefTensor, Mode, RhoSearch, RhoTable, TensorField};

/// Crate version, recorded in reproducibility stamps.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
