use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SimulationError};
use crate::exec::{self, Execution, Phase, BATCH_SIZE};
use crate::testbench::Testbench;
use crate::visfit::{FailureSample, FailureSet};

/// Shell-by-shell search for initial failure points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnionConfig {
    /// Shell thickness Δ, in units of σ.
    pub shell_width: f64,
    pub max_radius: f64,
    /// Points per shell; `None` means 10·D.
    pub samples_per_shell: Option<usize>,
    pub min_failures: usize,
}

impl Default for OnionConfig {
    fn default() -> Self {
        Self {
            shell_width: 1.0,
            max_radius: 8.0,
            samples_per_shell: None,
            min_failures: 20,
        }
    }
}

impl OnionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shell_width > 0.0 && self.shell_width <= self.max_radius && self.max_radius.is_finite()) {
            return Err(Error::contract("onion needs 0 < shell_width <= max_radius"));
        }
        if self.samples_per_shell == Some(0) {
            return Err(Error::contract("onion samples_per_shell must be at least 1"));
        }
        Ok(())
    }

    pub fn samples_for(&self, dim: usize) -> usize {
        self.samples_per_shell.unwrap_or(10 * dim)
    }
}

/// What the onion search found.
#[derive(Debug, Clone)]
pub struct OnionOutcome {
    pub failures: FailureSet,
    pub evaluations: u64,
    /// Outer radius of the last shell searched.
    pub radius: f64,
    pub shells: Vec<Shell>,
}

/// One searched annulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shell {
    pub inner: f64,
    pub outer: f64,
    pub draws: usize,
    /// ln(1/V) of the uniform law on the annulus.
    pub log_density: f64,
}

/// Inverse-CDF radius for a point uniform in the D-ball annulus [inner, outer]:
/// r = (inner^D + u·(outer^D − inner^D))^{1/D}, evaluated as a ratio to outer.
pub fn annulus_radius(dim: usize, inner: f64, outer: f64, u: f64) -> f64 {
    let d = dim as f64;
    let t = (inner / outer).powf(d);
    outer * (t + u * (1.0 - t)).powf(1.0 / d)
}

/// ln volume of the D-ball annulus [inner, outer].
fn log_annulus_volume(dim: usize, inner: f64, outer: f64) -> f64 {
    let d = dim as f64;
    let log_unit_ball = 0.5 * d * std::f64::consts::PI.ln() - libm::lgamma(0.5 * d + 1.0);
    let t = (inner / outer).powf(d);
    log_unit_ball + d * outer.ln() + (-t).ln_1p()
}

/// Uniform point in the annulus: a Gaussian direction scaled to an annulus radius.
pub fn sample_annulus<R: Rng + ?Sized>(dim: usize, inner: f64, outer: f64, rng: &mut R) -> DVector<f64> {
    let mut dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut n = dir.norm();
    while n == 0.0 {
        dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        n = dir.norm();
    }
    let r = annulus_radius(dim, inner, outer, rng.random::<f64>());
    dir * (r / n)
}

/// Error raised part-way through a search, with the evaluations already spent.
#[derive(Debug)]
pub(crate) struct OnionError {
    pub error: Error,
    pub evaluations: u64,
}

/// Searches shells [jΔ, (j+1)Δ] outward until at least `min_failures` have been
/// seen, returning every failure found. Only a search that reaches
/// `max_radius` without a single failure is an error.
///
/// Each archived point records ln(1/V_j), the log density of the uniform
/// shell law that produced it.
pub fn onion_init(bench: &Testbench, cfg: &OnionConfig, seed: u64, exec: Execution) -> Result<OnionOutcome> {
    onion_search(bench, cfg, seed, exec).map_err(|e| e.error)
}

pub(crate) fn onion_search(
    bench: &Testbench,
    cfg: &OnionConfig,
    seed: u64,
    exec: Execution,
) -> std::result::Result<OnionOutcome, OnionError> {
    let early = |error| OnionError { error, evaluations: 0 };
    cfg.validate().map_err(early)?;
    let dim = bench.dim();
    let per_shell = cfg.samples_for(dim);
    if per_shell == 0 {
        return Err(early(Error::contract("onion samples_per_shell must be at least 1")));
    }
    let exec = exec.restrict(bench.concurrency_safe());
    let mut failures = FailureSet::new(dim);
    let mut found = 0usize;
    let mut evaluations = 0u64;
    let mut shell = 0u64;
    let mut outer = 0.0;
    let mut shells = Vec::new();
    while outer < cfg.max_radius {
        let inner = shell as f64 * cfg.shell_width;
        outer = (inner + cfg.shell_width).min(cfg.max_radius);
        let log_g = -log_annulus_volume(dim, inner, outer);
        shells.push(Shell {
            inner,
            outer,
            draws: per_shell,
            log_density: log_g,
        });
        let n_batches = per_shell.div_ceil(BATCH_SIZE);
        let results = exec::map_indexed(exec, n_batches, |b| {
            let len = BATCH_SIZE.min(per_shell - b * BATCH_SIZE);
            let mut rng = exec::substream(seed, Phase::Onion, shell, b as u64);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let x = sample_annulus(dim, inner, outer, &mut rng);
                match bench.evaluate(x.as_slice()) {
                    Ok(fails) => out.push((x, fails)),
                    Err(e) => return (out, Some(e)),
                }
            }
            (out, None::<SimulationError>)
        });
        for (points, err) in results {
            evaluations += points.len() as u64;
            for (x, fails) in points {
                if fails {
                    found += 1;
                    failures
                        .insert(FailureSample::new(x).generated_by(log_g))
                        .expect("onion points share the bench dimension");
                }
            }
            if let Some(e) = err {
                return Err(OnionError {
                    error: e.into(),
                    evaluations,
                });
            }
        }
        shell += 1;
        if found >= cfg.min_failures.max(1) {
            break;
        }
    }
    if failures.is_empty() {
        return Err(OnionError {
            error: Error::Initialization {
                radius: outer,
                evaluations,
            },
            evaluations,
        });
    }
    Ok(OnionOutcome {
        failures,
        evaluations,
        radius: outer,
        shells,
    })
}
