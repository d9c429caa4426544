//! TAP free-energy upper bounds for mixed p-spin spin glasses.
//!
//! Vectors are plain `f64` slices of length `N`. Inner products and norms are
//! normalized: `<a,b> = (1/N) sum a_i b_i`, so spins in `{-1,1}^N` have norm 1.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod cover;
pub mod entropy;
pub mod error;
pub mod field;
pub mod hamiltonian;
pub mod linalg;
pub mod partition;
pub mod quadrature;
pub mod rng;
pub mod tap;

pub use covariance::CovarianceSeries;
pub use error::{Error, Result};
pub use field::ExternalField;
pub use hamiltonian::{DisorderSample, MixedModel};

/// Slack on `||sigma|| <= 1` checks.
pub const NORM_TOL: f64 = 1e-9;
