use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::special::HALF_LN_2PI;
use crate::error::{Error, Result};

/// Symmetry tolerance accepted for a covariance matrix.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Initial ridge, as a fraction of the mean variance tr(Σ)/D.
pub const RIDGE_START: f64 = 1e-6;
/// Largest ridge tried before giving up.
pub const RIDGE_MAX: f64 = 1e-2;

/// Multivariate normal N(μ, Σ) with a cached lower Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianProposal {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianProposal {
    /// Builds the proposal, requiring `covariance` to be symmetric and positive definite as given.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        check_shape(&mean, &covariance)?;
        check_symmetric(&covariance)?;
        let factor = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Fit("covariance is not positive definite".into()))?
            .unpack();
        Ok(Self::from_parts(mean, covariance, factor))
    }

    /// Builds the proposal from a fitted covariance, adding the escalating ridge
    /// described in [`regularize_covariance`].
    pub fn regularized(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        check_shape(&mean, covariance)?;
        let (covariance, factor) = regularize_covariance(covariance)?;
        Ok(Self::from_parts(mean, covariance, factor))
    }

    /// N(0, I) in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        Self::mean_shift(DVector::zeros(dim))
    }

    /// N(μ, I).
    pub fn mean_shift(mean: DVector<f64>) -> Self {
        Self::isotropic(mean, 1.0).expect("unit variance is positive")
    }

    /// N(μ, σ²I).
    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Fit(format!("isotropic variance {variance} is not positive")));
        }
        let d = mean.len();
        let covariance = DMatrix::identity(d, d) * variance;
        let factor = DMatrix::identity(d, d) * variance.sqrt();
        Ok(Self::from_parts(mean, covariance, factor))
    }

    fn from_parts(mean: DVector<f64>, covariance: DMatrix<f64>, factor: DMatrix<f64>) -> Self {
        let d = mean.len() as f64;
        let log_det_half: f64 = factor.diagonal().iter().map(|v| v.ln()).sum();
        Self {
            log_norm: -d * HALF_LN_2PI - log_det_half,
            mean,
            covariance,
            factor,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// L⁻¹(x − μ).
    pub(crate) fn whiten(&self, x: &DVector<f64>) -> DVector<f64> {
        let centered = x - &self.mean;
        self.factor
            .solve_lower_triangular(&centered)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        self.log_norm - 0.5 * self.whiten(x).norm_squared()
    }

    /// L·z for a fresh standard-normal z, i.e. a centered draw.
    pub(crate) fn sample_centered<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        &self.factor * z
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.sample_centered(rng) + &self.mean
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

fn check_shape(mean: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<()> {
    if mean.is_empty() {
        return Err(Error::contract("proposal dimension must be at least 1"));
    }
    if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            got: covariance.nrows().max(covariance.ncols()),
        });
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::Fit(format!("covariance not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Symmetrizes `covariance` and adds ε·(tr Σ / D)·I, starting at ε = 1e-6 and
/// growing tenfold up to 1e-2 until the Cholesky factorization succeeds.
/// A zero-trace matrix uses unit scale. Returns the regularized matrix and its
/// lower factor.
pub fn regularize_covariance(covariance: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = covariance.nrows();
    if covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("covariance has non-finite entries".into()));
    }
    let sym = (covariance + covariance.transpose()) * 0.5;
    let trace = sym.trace();
    let scale = if trace > 0.0 { trace / d as f64 } else { 1.0 };
    let mut eps = RIDGE_START;
    while eps <= RIDGE_MAX * (1.0 + 1e-9) {
        let candidate = &sym + DMatrix::identity(d, d) * (eps * scale);
        if let Some(chol) = candidate.clone().cholesky() {
            return Ok((candidate, chol.unpack()));
        }
        eps *= 10.0;
    }
    Err(Error::Fit(format!(
        "covariance not positive definite after ridge {RIDGE_MAX}·tr/D"
    )))
}
