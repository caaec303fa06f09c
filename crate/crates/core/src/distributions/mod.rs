//! Densities and exact samplers for the proposal families.
//!
//! Every family implements the same two operations the estimator needs: a
//! log-density that is safe to evaluate far in the tails, and a sampler that
//! consumes a fixed number of draws per point from the stream it is given, so
//! that splitting a request into pieces yields the same points.

mod gaussian;
mod mixture;
mod skew_normal;
pub mod special;

use nalgebra::DVector;
use rand::Rng;

pub use gaussian::{regularize_covariance, GaussianProposal, RIDGE_MAX, RIDGE_START, SYMMETRY_TOL};
pub use mixture::{MixtureProposal, WEIGHT_SUM_TOL};
pub use skew_normal::SkewNormalProposal;

use crate::error::{Error, Result};
use special::HALF_LN_2PI;

/// ln p(x) for the standard normal in `x.len()` dimensions.
pub fn log_density_standard_normal(x: &[f64]) -> f64 {
    -(x.len() as f64) * HALF_LN_2PI - 0.5 * x.iter().map(|v| v * v).sum::<f64>()
}

/// The variation space: D independent standard normal parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StandardNormalSpace {
    dim: usize,
}

impl StandardNormalSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("variation space needs D >= 1"));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim, x.len())?;
        Ok(log_density_standard_normal(x))
    }
}

/// Any distribution the importance-sampling step can draw from.
#[derive(Debug, Clone, PartialEq)]
pub enum Proposal {
    Gaussian(GaussianProposal),
    SkewNormal(SkewNormalProposal),
    Mixture(MixtureProposal),
}

impl Proposal {
    pub fn dim(&self) -> usize {
        match self {
            Proposal::Gaussian(q) => q.dim(),
            Proposal::SkewNormal(q) => q.dim(),
            Proposal::Mixture(q) => q.dim(),
        }
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        match self {
            Proposal::Gaussian(q) => q.log_density(x),
            Proposal::SkewNormal(q) => q.log_density(x),
            Proposal::Mixture(q) => q.log_density(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            Proposal::Gaussian(q) => q.sample(rng),
            Proposal::SkewNormal(q) => q.sample(rng),
            Proposal::Mixture(q) => q.sample(rng),
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Number of mixture components (1 for the single-component families).
    pub fn n_components(&self) -> usize {
        match self {
            Proposal::Mixture(q) => q.len(),
            _ => 1,
        }
    }
}

impl From<GaussianProposal> for Proposal {
    fn from(q: GaussianProposal) -> Self {
        Proposal::Gaussian(q)
    }
}

impl From<SkewNormalProposal> for Proposal {
    fn from(q: SkewNormalProposal) -> Self {
        Proposal::SkewNormal(q)
    }
}

impl From<MixtureProposal> for Proposal {
    fn from(q: MixtureProposal) -> Self {
        Proposal::Mixture(q)
    }
}
