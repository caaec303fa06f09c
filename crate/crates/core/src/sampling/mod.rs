//! Estimation engines: onion initialization, the adaptive BEYOND loop, and the
//! Monte Carlo and minimum-norm IS baselines.

mod estimator;
mod generators;
pub(crate) mod onion;
mod report;

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use estimator::{fom_from_moments, is_step, mc_fom, mn_omsv, EstimatorState};
pub use onion::{annulus_radius, onion_init, sample_annulus, OnionConfig, OnionOutcome, Shell};
pub use report::{csv_number, IterationRecord, RunReport};

use crate::clustering::{ClusterConfig, SilhouetteClusterer};
use crate::distributions::{GaussianProposal, Proposal};
use crate::error::{Error, Result, SimulationError};
use crate::exec::{self, Execution, Phase, BATCH_SIZE};
use crate::testbench::Testbench;
use generators::GeneratorMixture;
use crate::visfit::{fit_mixture, fit_warmup, FailureSet, FitConfig, Tier};

/// Settings of the adaptive importance-sampling loop. [`run_mnis`] reads the
/// same struct and ignores `fit` and `cluster`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeyondConfig {
    /// Draws per iteration, K.
    pub draws_per_iter: usize,
    pub fom_target: f64,
    pub max_iters: usize,
    /// Leading iterations left out of P̂.
    pub burn_in: usize,
    /// After warm-up, fit to p(x)/ḡ(x) instead of p(x), where ḡ is the
    /// draw-weighted mixture of every onion shell and proposal used so far.
    pub archive_reweight: bool,
    /// Leading iterations that use unit-covariance mean shifts (per cluster for
    /// the mixture tier) fitted with plain p(x) weights.
    pub warmup_iters: usize,
    pub onion: OnionConfig,
    pub fit: FitConfig,
    pub cluster: ClusterConfig,
    pub execution: Execution,
}

impl Default for BeyondConfig {
    fn default() -> Self {
        Self {
            draws_per_iter: 500,
            fom_target: 0.1,
            max_iters: 200,
            burn_in: 4,
            archive_reweight: true,
            warmup_iters: 4,
            onion: OnionConfig::default(),
            fit: FitConfig::default(),
            cluster: ClusterConfig::default(),
            execution: Execution::default(),
        }
    }
}

impl BeyondConfig {
    pub fn with_tier(tier: Tier) -> Self {
        Self {
            fit: FitConfig::with_tier(tier),
            ..Self::default()
        }
    }

    pub fn tier(&self) -> Tier {
        self.fit.tier
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws_per_iter == 0 {
            return Err(Error::contract("draws_per_iter must be at least 1"));
        }
        if !(self.fom_target > 0.0 && self.fom_target < 1.0) {
            return Err(Error::contract("fom_target must lie in (0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(Error::contract("max_iters must be at least 1"));
        }
        if self.burn_in >= self.max_iters {
            return Err(Error::contract("burn_in must be smaller than max_iters"));
        }
        if self.cluster.k_max == 0 {
            return Err(Error::contract("cluster.k_max must be at least 1"));
        }
        self.onion.validate()?;
        self.fit.validate()
    }
}

/// Plain Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    /// Draws between FoM checks.
    pub batch: u64,
    pub fom_target: f64,
    pub max_draws: u64,
    pub execution: Execution,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            batch: 100_000,
            fom_target: 0.1,
            max_draws: 100_000_000,
            execution: Execution::default(),
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.max_draws == 0 {
            return Err(Error::contract("batch and max_draws must be at least 1"));
        }
        if !(self.fom_target > 0.0 && self.fom_target < 1.0) {
            return Err(Error::contract("fom_target must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Trajectory and counters shared by the adaptive runners.
struct Tracker {
    method: String,
    bench: String,
    seed: u64,
    start: Instant,
    sims: u64,
    failures: u64,
    components: usize,
    rows: Vec<IterationRecord>,
}

impl Tracker {
    fn new(method: String, bench: &Testbench, seed: u64) -> Self {
        Self {
            method,
            bench: bench.name().to_string(),
            seed,
            start: Instant::now(),
            sims: 0,
            failures: 0,
            components: 0,
            rows: Vec::new(),
        }
    }

    fn report(&self, pf: f64, fom: Option<f64>, converged: bool) -> RunReport {
        RunReport {
            method: self.method.clone(),
            bench: self.bench.clone(),
            seed: self.seed,
            pf_estimate: pf,
            fom,
            converged,
            n_simulations: self.sims,
            n_failures: self.failures,
            iterations: self.rows.len(),
            n_components: self.components,
            per_iteration: self.rows.clone(),
            wall_time: self.start.elapsed(),
        }
    }

    fn abort(&self, error: Error, state: Option<&EstimatorState>) -> Error {
        let (pf, fom) = state.map_or((0.0, None), |s| (s.estimate(), s.fom()));
        Error::Aborted {
            source: Box::new(error),
            partial: Box::new(self.report(pf, fom, false)),
        }
    }
}

/// Shared driver: onion initialization, then `refit` + one IS step per
/// iteration until the FoM target or `max_iters`.
fn adaptive<F>(bench: &Testbench, cfg: &BeyondConfig, seed: u64, method: String, mut refit: F) -> Result<RunReport>
where
    F: FnMut(&FailureSet, usize) -> Result<Proposal>,
{
    cfg.validate()?;
    let mut track = Tracker::new(method, bench, seed);
    let onion = match onion::onion_search(bench, &cfg.onion, seed, cfg.execution) {
        Ok(o) => o,
        Err(e) => {
            track.sims = e.evaluations;
            return Err(match e.error {
                err @ Error::Initialization { .. } => err,
                err => track.abort(err, None),
            });
        }
    };
    track.sims = onion.evaluations;
    let archive = onion.failures;
    track.failures = archive.len() as u64;
    let mut state = EstimatorState::new(cfg.draws_per_iter, cfg.burn_in, archive);
    let mut generators = cfg.archive_reweight.then(|| {
        let mut g = GeneratorMixture::default();
        for s in &onion.shells {
            g.add_shell(s.draws, s.inner, s.outer, s.log_density);
        }
        g.cover(state.archive_mut(), cfg.execution);
        g
    });

    let mut converged = false;
    for t in 0..cfg.max_iters {
        let reweight = cfg.archive_reweight && t >= cfg.warmup_iters;
        state.archive_mut().set_reweight(reweight);
        let proposal = match refit(state.archive(), t) {
            Ok(q) => q,
            Err(e) => return Err(track.abort(e, Some(&state))),
        };
        track.components = proposal.n_components();
        let archived = state.archive().len();
        if let Err(e) = estimator::step(bench, &proposal, cfg.draws_per_iter, &mut state, seed, cfg.execution) {
            track.sims += e.evaluations;
            return Err(track.abort(e.error, Some(&state)));
        }
        if let Some(g) = generators.as_mut() {
            g.add_proposal(cfg.draws_per_iter, &proposal, state.archive_mut(), cfg.execution);
        }
        track.sims += cfg.draws_per_iter as u64;
        track.failures += (state.archive().len() - archived) as u64;
        let fom = state.fom();
        track.rows.push(IterationRecord {
            iter: t + 1,
            pf: state.estimate(),
            fom,
            sims: track.sims,
        });
        if fom.is_some_and(|f| f < cfg.fom_target) {
            converged = true;
            break;
        }
    }
    Ok(track.report(state.estimate(), state.fom(), converged))
}

/// The BEYOND loop: refit the tier's proposal from the whole archive every
/// iteration, draw K points, pool the weights, stop once ρ < `fom_target`.
///
/// On a simulator error mid-run the error is [`Error::Aborted`] carrying the
/// partial report.
pub fn run_beyond(bench: &Testbench, cfg: &BeyondConfig, seed: u64) -> Result<RunReport> {
    let method = format!("beyond:{}", cfg.tier());
    adaptive(bench, cfg, seed, method, |archive, t| {
        let clusterer = SilhouetteClusterer {
            config: cfg.cluster,
            seed,
            iteration: t as u64,
            execution: cfg.execution,
        };
        let fitted = if t < cfg.warmup_iters {
            fit_warmup(archive, &cfg.fit, &clusterer)?
        } else {
            fit_mixture(archive, &cfg.fit, &clusterer)?
        };
        Ok(fitted.proposal.into())
    })
}

/// Minimum-norm IS: N(mn_omsv(archive), I), with the shift recomputed from the
/// growing archive every iteration.
pub fn run_mnis(bench: &Testbench, cfg: &BeyondConfig, seed: u64) -> Result<RunReport> {
    adaptive(bench, cfg, seed, "mnis".into(), |archive, _| {
        Ok(GaussianProposal::mean_shift(mn_omsv(archive)?).into())
    })
}

/// Plain Monte Carlo from p(x) in batches of `cfg.batch` until ρ < `fom_target`
/// or `max_draws`. A run that never sees a failure is reported non-converged
/// with P̂ = 0.
pub fn run_mc(bench: &Testbench, cfg: &McConfig, seed: u64) -> Result<RunReport> {
    cfg.validate()?;
    let mut track = Tracker::new("mc".into(), bench, seed);
    track.components = 0;
    let exec = cfg.execution.restrict(bench.concurrency_safe());
    let dim = bench.dim();
    let mut hits = 0u64;
    let mut draws = 0u64;
    let mut converged = false;
    let mut round = 0u64;
    while draws < cfg.max_draws {
        let n = cfg.batch.min(cfg.max_draws - draws) as usize;
        let counts = exec::map_indexed(exec, n.div_ceil(BATCH_SIZE), |b| {
            let len = BATCH_SIZE.min(n - b * BATCH_SIZE);
            let mut rng = exec::substream(seed, Phase::MonteCarlo, round, b as u64);
            let mut x = vec![0.0; dim];
            let (mut done, mut fails) = (0u64, 0u64);
            for _ in 0..len {
                for v in x.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                match bench.evaluate(&x) {
                    Ok(f) => {
                        done += 1;
                        fails += f as u64;
                    }
                    Err(e) => return (done, fails, Some(e)),
                }
            }
            (done, fails, None::<SimulationError>)
        });
        for (done, fails, err) in counts {
            draws += done;
            hits += fails;
            if let Some(e) = err {
                track.sims = draws;
                track.failures = hits;
                let pf = hits as f64 / draws.max(1) as f64;
                return Err(Error::Aborted {
                    source: Box::new(e.into()),
                    partial: Box::new(track.report(pf, mc_fom(pf, draws), false)),
                });
            }
        }
        round += 1;
        let pf = hits as f64 / draws as f64;
        let fom = mc_fom(pf, draws);
        track.rows.push(IterationRecord {
            iter: round as usize,
            pf,
            fom,
            sims: draws,
        });
        if fom.is_some_and(|f| f < cfg.fom_target) {
            converged = true;
            break;
        }
    }
    track.sims = draws;
    track.failures = hits;
    let pf = hits as f64 / draws as f64;
    Ok(track.report(pf, mc_fom(pf, draws), converged))
}
