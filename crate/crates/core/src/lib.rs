//! Singularly perturbed linear PDAEs of the form
//!
//! ```text
//! ṗ + A p − Kᵀ m + Bᵀ λ = g,   ε ṁ + K p + D m = f,   B p = h,
//! ```
//!
//! their parabolic limit `ε → 0`, the first-order correction in `ε`, and the tooling to
//! measure how fast the expansion converges on a damped gas-pipe model.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod epsilon_expansion;
pub mod error;
pub mod error_metrics;
pub mod linalg;
pub mod pdae_core;
pub mod pipe_model;
pub mod sweep_rates;

pub use error::{Error, Result};
