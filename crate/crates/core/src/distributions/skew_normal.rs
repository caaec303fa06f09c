use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::gaussian::GaussianProposal;
use super::special::normal_log_cdf;
use crate::error::{Error, Result};

/// Multivariate skew normal 2·φ(x; μ, Σ)·Φ(αᵀ(x − μ)).
///
/// The skewing argument is centered at the location, which keeps the density
/// normalized for every μ and admits an exact sign-flip sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewNormalProposal {
    base: GaussianProposal,
    shape: DVector<f64>,
}

impl SkewNormalProposal {
    pub fn new(base: GaussianProposal, shape: DVector<f64>) -> Result<Self> {
        Error::check_dim(base.dim(), shape.len())?;
        if shape.iter().any(|a| !a.is_finite()) {
            return Err(Error::Fit("skew-normal shape has non-finite entries".into()));
        }
        Ok(Self { base, shape })
    }

    /// Zero shape; identical to `base` as a distribution.
    pub fn symmetric(base: GaussianProposal) -> Self {
        let shape = DVector::zeros(base.dim());
        Self { base, shape }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn location(&self) -> &DVector<f64> {
        self.base.mean()
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        self.base.covariance()
    }

    pub fn shape(&self) -> &DVector<f64> {
        &self.shape
    }

    pub fn gaussian(&self) -> &GaussianProposal {
        &self.base
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let gauss = self.base.log_density(x);
        if self.shape.iter().all(|&a| a == 0.0) {
            return gauss;
        }
        let s = self.shape.dot(&(x - self.base.mean()));
        LN_2 + gauss + normal_log_cdf(s)
    }

    /// Draws z ~ N(0, Σ) and u ~ N(0, 1); returns μ + z when u < αᵀz, else μ − z.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = self.base.sample_centered(rng);
        let u: f64 = rng.sample(StandardNormal);
        if u < self.shape.dot(&z) {
            self.base.mean() + z
        } else {
            self.base.mean() - z
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sn1(alpha: f64) -> SkewNormalProposal {
        SkewNormalProposal::new(GaussianProposal::standard(1), dvector![alpha]).unwrap()
    }

    #[test]
    fn reference_value_alpha_one() {
        // ln 2 − 1/2 − ln(2π)/2 + ln Φ(1), Φ(1) = 0.841344746
        let v = sn1(1.0).log_density(&dvector![1.0]);
        assert_relative_eq!(v, -0.898_545_131_668_177, epsilon = 1e-9);
    }

    #[test]
    fn zero_shape_reduces_exactly() {
        let base = GaussianProposal::new(dvector![1.0, -2.0], dmatrix![1.5, 0.2; 0.2, 0.7]).unwrap();
        let sn = SkewNormalProposal::new(base.clone(), dvector![0.0, 0.0]).unwrap();
        for x in [dvector![0.0, 0.0], dvector![3.0, 1.0], dvector![-7.0, 2.5]] {
            assert_eq!(sn.log_density(&x), base.log_density(&x));
        }
    }

    #[test]
    fn density_falls_with_shape_on_the_left() {
        let x = dvector![-1.0];
        let mut last = f64::INFINITY;
        for a in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 200.0] {
            let v = sn1(a).log_density(&x);
            assert!(v < last, "alpha {a}: {v} !< {last}");
            last = v;
        }
        assert!(last.is_finite());
    }

    #[test]
    fn dimension_checked() {
        assert!(SkewNormalProposal::new(GaussianProposal::standard(2), dvector![1.0]).is_err());
    }

    #[test]
    fn sampler_deterministic() {
        let q = sn1(3.0);
        let a = q.sample(&mut ChaCha8Rng::seed_from_u64(4));
        let b = q.sample(&mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }
}
