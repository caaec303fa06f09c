use nalgebra::DVector;

use crate::distributions::{log_density_standard_normal, Proposal};
use crate::error::{Error, Result, SimulationError};
use crate::exec::{self, CompensatedSum, Execution, Phase, BATCH_SIZE};
use crate::testbench::Testbench;
use crate::visfit::{FailureSample, FailureSet};

/// ρ = √((S₂/n − P̂²)/(n − 1)) / P̂ with P̂ = S₁/n, from pooled per-draw moments.
/// `None` when n < 2 or P̂ = 0.
pub fn fom_from_moments(sum: f64, sum_sq: f64, n: u64) -> Option<f64> {
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let pf = sum / nf;
    if !(pf > 0.0) {
        return None;
    }
    let var = (sum_sq / nf - pf * pf).max(0.0);
    Some((var / (nf - 1.0)).sqrt() / pf)
}

/// Binomial FoM of plain Monte Carlo, √((1 − P̂)/(N·P̂)).
pub fn mc_fom(pf: f64, n: u64) -> Option<f64> {
    if n == 0 || !(pf > 0.0) {
        return None;
    }
    Some(((1.0 - pf) / (n as f64 * pf)).sqrt())
}

/// Running state of the pooled importance-sampling estimator.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    iteration: usize,
    draws_per_iter: usize,
    burn_in: usize,
    sum_weights: CompensatedSum,
    sum_sq_weights: CompensatedSum,
    total_draws: u64,
    pooled_draws: u64,
    archive: FailureSet,
    fom_history: Vec<Option<f64>>,
    pf_history: Vec<f64>,
}

impl EstimatorState {
    /// Iterations before `burn_in` are simulated and archived but left out of P̂.
    pub fn new(draws_per_iter: usize, burn_in: usize, archive: FailureSet) -> Self {
        Self {
            iteration: 0,
            draws_per_iter,
            burn_in,
            sum_weights: CompensatedSum::default(),
            sum_sq_weights: CompensatedSum::default(),
            total_draws: 0,
            pooled_draws: 0,
            archive,
            fom_history: Vec::new(),
            pf_history: Vec::new(),
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn draws_per_iter(&self) -> usize {
        self.draws_per_iter
    }

    /// t·K, every importance draw made so far.
    pub fn total_draws(&self) -> u64 {
        self.total_draws
    }

    /// Draws entering P̂ (all of them unless `burn_in` > 0).
    pub fn pooled_draws(&self) -> u64 {
        self.pooled_draws
    }

    pub fn sum_weights(&self) -> f64 {
        self.sum_weights.value()
    }

    pub fn sum_sq_weights(&self) -> f64 {
        self.sum_sq_weights.value()
    }

    pub fn archive(&self) -> &FailureSet {
        &self.archive
    }

    pub fn archive_mut(&mut self) -> &mut FailureSet {
        &mut self.archive
    }

    pub fn fom_history(&self) -> &[Option<f64>] {
        &self.fom_history
    }

    pub fn pf_history(&self) -> &[f64] {
        &self.pf_history
    }

    /// P̂ = Σ I·w / (pooled draws); 0 before any draw.
    pub fn estimate(&self) -> f64 {
        if self.pooled_draws == 0 {
            0.0
        } else {
            self.sum_weights.value() / self.pooled_draws as f64
        }
    }

    pub fn fom(&self) -> Option<f64> {
        fom_from_moments(self.sum_weights.value(), self.sum_sq_weights.value(), self.pooled_draws)
    }

    /// Accumulates one iteration's per-draw terms I(x)·w(x) and advances t.
    pub fn absorb(&mut self, terms: &[f64]) {
        if self.iteration >= self.burn_in {
            for &v in terms {
                self.sum_weights.add(v);
                self.sum_sq_weights.add(v * v);
            }
            self.pooled_draws += terms.len() as u64;
        }
        self.total_draws += terms.len() as u64;
        self.iteration += 1;
        self.pf_history.push(self.estimate());
        self.fom_history.push(self.fom());
    }
}

/// The failure point of minimal norm; the first one wins ties.
pub fn mn_omsv(fs: &FailureSet) -> Result<DVector<f64>> {
    fs.points()
        .fold(None::<&DVector<f64>>, |best, p| match best {
            Some(b) if b.norm_squared() <= p.norm_squared() => Some(b),
            _ => Some(p),
        })
        .cloned()
        .ok_or_else(|| Error::contract("failure set is empty"))
}

/// One importance draw.
#[derive(Debug, Clone)]
struct Draw {
    point: DVector<f64>,
    fails: bool,
    log_p: f64,
    log_q: f64,
}

/// Outcome of an [`is_step`] that failed part-way.
#[derive(Debug)]
pub(crate) struct StepError {
    pub error: Error,
    pub evaluations: u64,
}

/// Draws K points from `proposal`, weights the failures by p/q, pools the terms
/// into `state` and archives the new failures.
///
/// Batch b of iteration t reads substream `(seed, Importance, t, b)`, so the
/// result does not depend on `exec` or the thread count.
pub fn is_step(
    bench: &Testbench,
    proposal: &Proposal,
    k: usize,
    state: &mut EstimatorState,
    seed: u64,
    exec: Execution,
) -> Result<()> {
    step(bench, proposal, k, state, seed, exec).map_err(|e| e.error)
}

pub(crate) fn step(
    bench: &Testbench,
    proposal: &Proposal,
    k: usize,
    state: &mut EstimatorState,
    seed: u64,
    exec: Execution,
) -> std::result::Result<(), StepError> {
    let early = |error| StepError { error, evaluations: 0 };
    if k == 0 {
        return Err(early(Error::contract("importance step needs K >= 1")));
    }
    Error::check_dim(bench.dim(), proposal.dim()).map_err(early)?;
    let t = state.iteration as u64;
    let n_batches = k.div_ceil(BATCH_SIZE);
    let results = exec::map_indexed(exec.restrict(bench.concurrency_safe()), n_batches, |b| {
        let len = BATCH_SIZE.min(k - b * BATCH_SIZE);
        let mut rng = exec::substream(seed, Phase::Importance, t, b as u64);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let point = proposal.sample(&mut rng);
            match bench.evaluate(point.as_slice()) {
                Ok(fails) => {
                    let (log_p, log_q) = if fails {
                        (log_density_standard_normal(point.as_slice()), proposal.log_density(&point))
                    } else {
                        (f64::NEG_INFINITY, 0.0)
                    };
                    out.push(Draw {
                        point,
                        fails,
                        log_p,
                        log_q,
                    });
                }
                Err(e) => return (out, Some(e)),
            }
        }
        (out, None::<SimulationError>)
    });

    let mut terms = Vec::with_capacity(k);
    let mut fresh = Vec::new();
    let mut evaluations = 0u64;
    for (draws, err) in results {
        evaluations += draws.len() as u64;
        if let Some(e) = err {
            return Err(StepError {
                error: e.into(),
                evaluations,
            });
        }
        for d in draws {
            if !d.fails {
                terms.push(0.0);
                continue;
            }
            let w = (d.log_p - d.log_q).exp();
            if !w.is_finite() {
                return Err(StepError {
                    error: Error::NonFiniteWeight {
                        iteration: state.iteration,
                        detail: format!("ln p = {}, ln q = {} at {:?}", d.log_p, d.log_q, d.point.as_slice()),
                    },
                    evaluations,
                });
            }
            terms.push(w);
            fresh.push(FailureSample::with_log_weight(d.point, d.log_p).generated_by(d.log_q));
        }
    }
    for s in fresh {
        state.archive.insert(s).expect("draws share the bench dimension");
    }
    state.absorb(&terms);
    Ok(())
}
