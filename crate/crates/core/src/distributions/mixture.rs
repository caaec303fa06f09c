use nalgebra::DVector;
use rand::Rng;

use super::skew_normal::SkewNormalProposal;
use super::special::log_sum_exp;
use crate::error::{Error, Result};

/// Tolerance on Σ w_m = 1.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Finite mixture Σ_m w_m · SN(x | μ_m, Σ_m, α_m).
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureProposal {
    components: Vec<SkewNormalProposal>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl MixtureProposal {
    pub fn new(components: Vec<SkewNormalProposal>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::contract("mixture needs at least one component"));
        }
        if components.len() != weights.len() {
            return Err(Error::contract(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        let dim = components[0].dim();
        for c in &components {
            Error::check_dim(dim, c.dim())?;
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::contract("mixture weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::contract(format!("mixture weights sum to {total}, not 1")));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(Self {
            components,
            weights,
            log_weights,
            cumulative,
        })
    }

    /// Weights proportional to `counts` (cluster sizes).
    pub fn from_counts(components: Vec<SkewNormalProposal>, counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::contract("mixture counts are all zero"));
        }
        let weights = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self::new(components, weights)
    }

    pub fn single(component: SkewNormalProposal) -> Self {
        Self::new(vec![component], vec![1.0]).expect("one component with unit weight")
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> &[SkewNormalProposal] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        if self.components.len() == 1 {
            return self.components[0].log_density(x);
        }
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| lw + c.log_density(x))
            .collect();
        log_sum_exp(&terms)
    }

    /// Index of the component selected by a uniform draw `u` in [0, 1).
    fn pick(&self, u: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.components.len() - 1)
    }

    /// Draws one point and reports which component produced it.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, DVector<f64>) {
        let m = self.pick(rng.random::<f64>());
        (m, self.components[m].sample(rng))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.sample_labeled(rng).1
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::GaussianProposal;
    use nalgebra::dvector;

    #[test]
    fn validation() {
        let c = SkewNormalProposal::symmetric(GaussianProposal::standard(1));
        assert!(MixtureProposal::new(vec![], vec![]).is_err());
        assert!(MixtureProposal::new(vec![c.clone()], vec![0.9]).is_err());
        assert!(MixtureProposal::new(vec![c.clone(), c.clone()], vec![1.5, -0.5]).is_err());
        assert!(MixtureProposal::new(vec![c.clone(), c.clone()], vec![0.6, 0.4]).is_ok());
        let other = SkewNormalProposal::symmetric(GaussianProposal::standard(2));
        assert!(MixtureProposal::new(vec![c, other], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn counts_become_weights() {
        let c = SkewNormalProposal::symmetric(GaussianProposal::standard(1));
        let m = MixtureProposal::from_counts(vec![c.clone(), c], &[60, 40]).unwrap();
        assert_eq!(m.weights(), &[0.6, 0.4]);
    }

    #[test]
    fn single_component_is_transparent() {
        let c = SkewNormalProposal::new(GaussianProposal::mean_shift(dvector![1.0]), dvector![2.0]).unwrap();
        let m = MixtureProposal::single(c.clone());
        for x in [-1.0, 0.0, 2.5] {
            let x = dvector![x];
            assert_eq!(m.log_density(&x), c.log_density(&x));
        }
    }
}
