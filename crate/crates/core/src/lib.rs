//! Rank-based inference for copulas in high dimensions.
//!
//! Pseudo-observations and empirical copulas, pairwise Spearman, Kendall and
//! Blomquist coefficients, Gumbel-calibrated max-type independence tests, a
//! multiplier-bootstrap stepdown procedure with family-wise error control,
//! Moebius-transform statistics, and a seeded Monte Carlo harness.

pub mod association;
pub mod empirical;
pub mod error;
pub mod harness;
pub mod maxtest;
pub mod models;
pub mod moebius;
pub mod numeric;
pub mod ranks;
pub mod rng;
pub mod stepdown;

pub use error::{Error, Result};
