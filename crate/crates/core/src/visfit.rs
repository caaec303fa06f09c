//! Closed-form and gradient fits of proposal parameters to weighted failure samples.
//!
//! Each failure point x_i carries the log of its fitting weight, by default
//! ln p(x_i) under the standard normal. All fitters work from the normalized
//! weights w̃_i = p(x_i) / Σ_j p(x_j) computed in log space, so a common shift
//! of the log-weights never changes a result.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clustering::{ClusteringResult, Clusterer};
use crate::distributions::special::{inverse_mills, normal_log_cdf};
use crate::distributions::{
    log_density_standard_normal, GaussianProposal, MixtureProposal, SkewNormalProposal,
};
use crate::error::{Error, Result};

/// Points closer than this (L2) are treated as duplicates.
pub const DEDUP_DISTANCE: f64 = 1e-12;

/// Lower bound on the fitted isotropic variance.
pub const SCALAR_VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FailureSample {
    pub point: DVector<f64>,
    /// ln p(x) under the standard normal.
    pub log_weight: f64,
    /// ln g(x) of the distribution that generated the point; 0 for uniform exploration.
    pub log_generator: f64,
}

impl FailureSample {
    pub fn new(point: DVector<f64>) -> Self {
        let log_weight = log_density_standard_normal(point.as_slice());
        Self {
            point,
            log_weight,
            log_generator: 0.0,
        }
    }

    /// Sample with an explicit log-weight, bypassing the standard-normal density.
    pub fn with_log_weight(point: DVector<f64>, log_weight: f64) -> Self {
        Self {
            point,
            log_weight,
            log_generator: 0.0,
        }
    }

    pub fn generated_by(mut self, log_generator: f64) -> Self {
        self.log_generator = log_generator;
        self
    }
}

/// Deduplicated archive of failure points sharing one dimension.
#[derive(Debug, Clone, Default)]
pub struct FailureSet {
    dim: usize,
    samples: Vec<FailureSample>,
    // first coordinate (order-preserving bits) -> sample indices
    index: BTreeMap<u64, Vec<usize>>,
    reweight: bool,
}

fn ordered_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

impl FailureSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn from_points(dim: usize, points: impl IntoIterator<Item = DVector<f64>>) -> Result<Self> {
        let mut fs = Self::new(dim);
        for p in points {
            fs.insert(FailureSample::new(p))?;
        }
        Ok(fs)
    }

    /// When set, fitting weights become p(x)/g(x) instead of p(x).
    pub fn set_reweight(&mut self, reweight: bool) {
        self.reweight = reweight;
    }

    pub fn reweight(&self) -> bool {
        self.reweight
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[FailureSample] {
        &self.samples
    }

    pub fn points(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.samples.iter().map(|s| &s.point)
    }

    fn contains_near(&self, point: &DVector<f64>) -> bool {
        let lo = ordered_bits(point[0] - DEDUP_DISTANCE);
        let hi = ordered_bits(point[0] + DEDUP_DISTANCE);
        self.index
            .range(lo..=hi)
            .flat_map(|(_, ids)| ids)
            .any(|&i| (&self.samples[i].point - point).norm() < DEDUP_DISTANCE)
    }

    /// Adds the sample unless a point within [`DEDUP_DISTANCE`] is already
    /// archived. Returns whether it was added.
    pub fn insert(&mut self, sample: FailureSample) -> Result<bool> {
        Error::check_dim(self.dim, sample.point.len())?;
        if self.contains_near(&sample.point) {
            return Ok(false);
        }
        let key = ordered_bits(sample.point[0]);
        self.index.entry(key).or_default().push(self.samples.len());
        self.samples.push(sample);
        Ok(true)
    }

    /// Overwrites ln g of sample `i` with `log_generator(i, sample)`.
    pub fn set_log_generators<F>(&mut self, mut log_generator: F)
    where
        F: FnMut(usize, &FailureSample) -> f64,
    {
        for (i, s) in self.samples.iter_mut().enumerate() {
            s.log_generator = log_generator(i, s);
        }
    }

    /// Subset with the given sample indices, keeping the weighting mode.
    pub fn subset(&self, indices: &[usize]) -> FailureSet {
        let mut out = FailureSet::new(self.dim);
        out.reweight = self.reweight;
        for &i in indices {
            out.insert(self.samples[i].clone()).expect("same dimension");
        }
        out
    }

    /// Log fitting weight of every sample.
    pub fn fitting_log_weights(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| {
                if self.reweight {
                    s.log_weight - s.log_generator
                } else {
                    s.log_weight
                }
            })
            .collect()
    }

    /// Kish effective sample size of the normalized weights.
    pub fn effective_size(&self) -> Result<f64> {
        let w = normalized_weights(self)?;
        Ok(1.0 / w.iter().map(|v| v * v).sum::<f64>())
    }
}

fn require_nonempty(fs: &FailureSet) -> Result<()> {
    if fs.is_empty() {
        Err(Error::contract("failure set is empty"))
    } else {
        Ok(())
    }
}

/// w̃_i = exp(ℓ_i − m) / Σ_j exp(ℓ_j − m) with m = max ℓ.
pub fn normalized_weights(fs: &FailureSet) -> Result<Vec<f64>> {
    require_nonempty(fs)?;
    let logs = fs.fitting_log_weights();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Fit("failure weights are not finite".into()));
    }
    let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Weighted average of the failure points: the mean shift that maximizes the
/// weighted log-likelihood within the N(μ, I) family.
pub fn true_omsv(fs: &FailureSet) -> Result<DVector<f64>> {
    let w = normalized_weights(fs)?;
    let mut mu = DVector::zeros(fs.dim());
    for (s, wi) in fs.samples().iter().zip(&w) {
        mu.axpy(*wi, &s.point, 1.0);
    }
    Ok(mu)
}

/// Weighted scatter Σ_i w̃_i (x_i − μ)(x_i − μ)ᵀ, before any ridge.
pub fn full_sss_covariance(fs: &FailureSet, mu: &DVector<f64>) -> Result<DMatrix<f64>> {
    let w = normalized_weights(fs)?;
    Error::check_dim(fs.dim(), mu.len())?;
    let d = fs.dim();
    let mut cov = DMatrix::zeros(d, d);
    for (s, wi) in fs.samples().iter().zip(&w) {
        let c = &s.point - mu;
        cov.ger(*wi, &c, &c, 1.0);
    }
    // exact symmetry
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(cov)
}

/// σ² = Σ_i w̃_i ‖x_i − μ‖² / D, floored at [`SCALAR_VARIANCE_FLOOR`].
pub fn scalar_sss_variance(fs: &FailureSet, mu: &DVector<f64>) -> Result<f64> {
    let w = normalized_weights(fs)?;
    Error::check_dim(fs.dim(), mu.len())?;
    let total: f64 = fs
        .samples()
        .iter()
        .zip(&w)
        .map(|(s, wi)| wi * (&s.point - mu).norm_squared())
        .sum();
    Ok((total / fs.dim() as f64).max(SCALAR_VARIANCE_FLOOR))
}

/// Proposal family fitted each iteration, from the plain mean shift up to the
/// skew-normal mixture.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    MeanShiftOnly,
    FullCovariance,
    ScalarSss,
    SkewNormal,
    #[default]
    MixtureSkewNormal,
}

impl Tier {
    pub const ALL: [Tier; 5] = [
        Tier::MeanShiftOnly,
        Tier::FullCovariance,
        Tier::ScalarSss,
        Tier::SkewNormal,
        Tier::MixtureSkewNormal,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Tier::MeanShiftOnly => "mean_shift_only",
            Tier::FullCovariance => "full_covariance",
            Tier::ScalarSss => "scalar_sss",
            Tier::SkewNormal => "skew_normal",
            Tier::MixtureSkewNormal => "mixture_skew_normal",
        }
    }
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tier::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| format!("unknown tier `{s}`"))
    }
}

/// How mixture component weights are set from a clustering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureWeights {
    /// w_m = N′_m / N′.
    Counts,
    /// w_m = Σ_{i ∈ m} w̃_i, the fitting-weight mass of the cluster.
    #[default]
    Mass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub tier: Tier,
    pub mixture_weights: MixtureWeights,
    /// Pseudo-sample count ν of the identity prior blended into full
    /// covariance fits: Σ = (n_eff·Σ̂ + ν·I)/(n_eff + ν). Zero disables it.
    pub prior_strength: f64,
    pub alpha_step: f64,
    pub alpha_max_iters: usize,
    pub alpha_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tier: Tier::default(),
            mixture_weights: MixtureWeights::default(),
            prior_strength: 100.0,
            alpha_step: 0.05,
            alpha_max_iters: 500,
            alpha_tol: 1e-6,
        }
    }
}

impl FitConfig {
    pub fn with_tier(tier: Tier) -> Self {
        Self {
            tier,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior_strength >= 0.0 && self.prior_strength.is_finite()) {
            return Err(Error::contract("prior_strength must be finite and non-negative"));
        }
        if !(self.alpha_step > 0.0) {
            return Err(Error::contract("alpha_step must be positive"));
        }
        if self.alpha_max_iters == 0 {
            return Err(Error::contract("alpha_max_iters must be at least 1"));
        }
        if !(self.alpha_tol > 0.0) {
            return Err(Error::contract("alpha_tol must be positive"));
        }
        Ok(())
    }
}

/// Skew-dependent part of the weighted objective, Σ_i w̃_i ln Φ(αᵀ(x_i − μ)).
pub fn alpha_objective(fs: &FailureSet, mu: &DVector<f64>, alpha: &DVector<f64>) -> Result<f64> {
    let w = normalized_weights(fs)?;
    Ok(fs
        .samples()
        .iter()
        .zip(&w)
        .map(|(s, wi)| wi * normal_log_cdf(alpha.dot(&(&s.point - mu))))
        .sum())
}

/// ∂/∂α of [`alpha_objective`]: Σ_i w̃_i φ(s_i)/Φ(s_i) (x_i − μ).
pub fn alpha_gradient(fs: &FailureSet, mu: &DVector<f64>, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    let w = normalized_weights(fs)?;
    let mut g = DVector::zeros(fs.dim());
    for (s, wi) in fs.samples().iter().zip(&w) {
        let c = &s.point - mu;
        g.axpy(wi * inverse_mills(alpha.dot(&c)), &c, 1.0);
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaFit {
    pub alpha: DVector<f64>,
    /// Σ_i w̃_i ln SN(x_i | μ, Σ, α) at the returned α.
    pub objective: f64,
    pub iterations: usize,
}

/// Maximizes Σ_i w̃_i ln SN(x_i | μ, Σ, α) over α with μ, Σ held fixed.
///
/// Fixed-step gradient ascent from α = 0; a step that lowers the objective is
/// rejected and the step halved, so the result never scores below α = 0.
pub fn fit_alpha(fs: &FailureSet, mu: &DVector<f64>, sigma: &DMatrix<f64>, cfg: &FitConfig) -> Result<AlphaFit> {
    cfg.validate()?;
    Error::check_dim(fs.dim(), mu.len())?;
    let base = GaussianProposal::new(mu.clone(), sigma.clone())?;
    let w = normalized_weights(fs)?;
    let gauss_part: f64 = fs
        .samples()
        .iter()
        .zip(&w)
        .map(|(s, wi)| wi * base.log_density(&s.point))
        .sum::<f64>()
        + std::f64::consts::LN_2;
    if !gauss_part.is_finite() {
        return Err(Error::Fit("skew-normal objective is not finite".into()));
    }

    let mut alpha = DVector::zeros(fs.dim());
    let mut value = alpha_objective(fs, mu, &alpha)?;
    let mut step = cfg.alpha_step;
    let mut iterations = 0;
    while iterations < cfg.alpha_max_iters {
        iterations += 1;
        let grad = alpha_gradient(fs, mu, &alpha)?;
        if grad.amax() < cfg.alpha_tol {
            break;
        }
        let candidate = &alpha + &grad * step;
        let cand_value = alpha_objective(fs, mu, &candidate)?;
        if !cand_value.is_finite() {
            return Err(Error::Fit("skew-normal objective is not finite".into()));
        }
        if cand_value >= value {
            alpha = candidate;
            value = cand_value;
        } else {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }
    Ok(AlphaFit {
        alpha,
        objective: gauss_part + value,
        iterations,
    })
}

/// Covariance for one component. Falls back to σ²I when the set is too small
/// to support a full D×D estimate, and to I with fewer than two samples.
fn component_covariance(fs: &FailureSet, mu: &DVector<f64>, prior: f64) -> Result<GaussianProposal> {
    let d = fs.dim();
    if fs.len() < 2 {
        return Ok(GaussianProposal::mean_shift(mu.clone()));
    }
    if fs.len() < d + 2 {
        let var = scalar_sss_variance(fs, mu)?;
        return GaussianProposal::isotropic(mu.clone(), var);
    }
    let mut cov = full_sss_covariance(fs, mu)?;
    if prior > 0.0 {
        let n = fs.effective_size()?;
        cov = (cov * n + DMatrix::identity(d, d) * prior) / (n + prior);
    }
    GaussianProposal::regularized(mu.clone(), &cov)
}

fn isotropic_component(fs: &FailureSet, mu: &DVector<f64>) -> Result<GaussianProposal> {
    if fs.len() < 2 {
        return Ok(GaussianProposal::mean_shift(mu.clone()));
    }
    GaussianProposal::isotropic(mu.clone(), scalar_sss_variance(fs, mu)?)
}

fn skew_component(fs: &FailureSet, cfg: &FitConfig) -> Result<SkewNormalProposal> {
    let mu = true_omsv(fs)?;
    let base = component_covariance(fs, &mu, cfg.prior_strength)?;
    let fit = fit_alpha(fs, &mu, base.covariance(), cfg)?;
    SkewNormalProposal::new(base, fit.alpha)
}

/// A fitted proposal with the clustering that shaped it, if any.
#[derive(Debug, Clone)]
pub struct FittedMixture {
    pub proposal: MixtureProposal,
    pub clustering: Option<ClusteringResult>,
}

/// Fits the proposal for `cfg.tier`. Only the mixture tier consults `clusterer`;
/// its component weights are the cluster sizes over N′.
pub fn fit_mixture(fs: &FailureSet, cfg: &FitConfig, clusterer: &dyn Clusterer) -> Result<FittedMixture> {
    require_nonempty(fs)?;
    cfg.validate()?;
    let single = |c: SkewNormalProposal| FittedMixture {
        proposal: MixtureProposal::single(c),
        clustering: None,
    };
    match cfg.tier {
        Tier::MeanShiftOnly => {
            let mu = true_omsv(fs)?;
            Ok(single(SkewNormalProposal::symmetric(GaussianProposal::mean_shift(mu))))
        }
        Tier::ScalarSss => {
            let mu = true_omsv(fs)?;
            Ok(single(SkewNormalProposal::symmetric(isotropic_component(fs, &mu)?)))
        }
        Tier::FullCovariance => {
            let mu = true_omsv(fs)?;
            Ok(single(SkewNormalProposal::symmetric(component_covariance(fs, &mu, cfg.prior_strength)?)))
        }
        Tier::SkewNormal => Ok(single(skew_component(fs, cfg)?)),
        Tier::MixtureSkewNormal => clustered(fs, cfg.mixture_weights, clusterer, |sub| skew_component(sub, cfg)),
    }
}

/// Clusters the archive and fits one component per cluster.
fn clustered<F>(fs: &FailureSet, mode: MixtureWeights, clusterer: &dyn Clusterer, component: F) -> Result<FittedMixture>
where
    F: Fn(&FailureSet) -> Result<SkewNormalProposal>,
{
    let points: Vec<DVector<f64>> = fs.points().cloned().collect();
    let clustering = clusterer.cluster(&points)?;
    let groups = clustering.members();
    let mut components = Vec::with_capacity(groups.len());
    for members in &groups {
        components.push(component(&fs.subset(members))?);
    }
    let proposal = match mode {
        MixtureWeights::Counts => {
            let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
            MixtureProposal::from_counts(components, &counts)?
        }
        MixtureWeights::Mass => {
            let w = normalized_weights(fs)?;
            let mass: Vec<f64> = groups.iter().map(|m| m.iter().map(|&i| w[i]).sum()).collect();
            let total: f64 = mass.iter().sum();
            MixtureProposal::new(components, mass.iter().map(|m| m / total).collect())?
        }
    };
    Ok(FittedMixture {
        proposal,
        clustering: Some(clustering),
    })
}

/// Unit-covariance mean shifts: N(true_omsv, I) for the single-component tiers,
/// and one N(μ_m, I) per cluster for the mixture tier. Used while the archive is
/// still too far from the failure region to support covariance estimates.
pub fn fit_warmup(fs: &FailureSet, cfg: &FitConfig, clusterer: &dyn Clusterer) -> Result<FittedMixture> {
    require_nonempty(fs)?;
    let shift = |sub: &FailureSet| -> Result<SkewNormalProposal> {
        Ok(SkewNormalProposal::symmetric(GaussianProposal::mean_shift(true_omsv(sub)?)))
    };
    if cfg.tier != Tier::MixtureSkewNormal {
        return Ok(FittedMixture {
            proposal: MixtureProposal::single(shift(fs)?),
            clustering: None,
        });
    }
    clustered(fs, MixtureWeights::Counts, clusterer, shift)
}
