//! Rare-event failure-probability estimation by variational importance sampling.
//!
//! The pieces, bottom-up:
//!
//! - [`distributions`]: the proposal families (Gaussian, skew normal, mixtures).
//! - [`visfit`]: closed-form and gradient fits of those families to weighted
//!   failure samples.
//! - [`clustering`]: k-means with silhouette-selected cluster count.
//! - [`sampling`]: onion initialization, the BEYOND loop, and the Monte Carlo
//!   and minimum-norm baselines.
//! - [`testbench`]: analytic indicator functions with exact oracles, and an
//!   adapter for external simulators.
//! - [`optimize`]: design optimization that pushes the failure region outward.

// Range guards are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod distributions;
pub mod error;
pub mod exec;
pub mod optimize;
pub mod sampling;
pub mod testbench;
pub mod visfit;

pub use error::{Error, Result, SimulationError};
pub use exec::Execution;
