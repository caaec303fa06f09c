//! Yield optimization: projected gradient ascent of ‖μ(z)‖² over a design box,
//! μ(z) being the mean shift fitted to the failures the onion search finds at
//! design z.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution, Phase};
use crate::sampling::onion::{self, OnionConfig};
use crate::sampling::{csv_number, mn_omsv};
use crate::testbench::QuadraticFamily;
use crate::visfit::true_omsv;

/// Which mean shift stands in for μ(z).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmsvMode {
    /// The failure point closest to the origin.
    MinNorm,
    /// The p-weighted mean of the failure points.
    #[default]
    TrueOmsv,
}

impl OmsvMode {
    pub fn label(self) -> &'static str {
        match self {
            OmsvMode::MinNorm => "min_norm",
            OmsvMode::TrueOmsv => "true_omsv",
        }
    }
}

/// Settings of the ascent. The design box is the family's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub z0: Vec<f64>,
    pub step: f64,
    pub max_outer_iters: usize,
    pub omsv_mode: OmsvMode,
    /// Onion search run at every design; `min_failures` is the per-evaluation
    /// failure budget.
    pub onion: OnionConfig,
    /// Central-difference half width.
    pub fd_step: f64,
    pub grad_tol: f64,
    pub execution: Execution,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            z0: Vec::new(),
            step: 0.05,
            max_outer_iters: 30,
            omsv_mode: OmsvMode::default(),
            onion: OnionConfig::default(),
            fd_step: 0.25,
            grad_tol: 1e-4,
            execution: Execution::default(),
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self, family: &QuadraticFamily) -> Result<()> {
        family.validate()?;
        Error::check_dim(family.design_dim(), self.z0.len())?;
        if !family.contains(&self.z0) {
            return Err(Error::contract(format!("z0 {:?} is outside the design box", self.z0)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::contract("step must be positive"));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::contract("fd_step must be positive"));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::contract("grad_tol must be non-negative"));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::contract("max_outer_iters must be at least 1"));
        }
        self.onion.validate()
    }
}

/// μ(z) and what it cost.
#[derive(Debug, Clone, PartialEq)]
pub struct OmsvEval {
    /// `None` when no failure was found and the sentinel stands in.
    pub mu: Option<DVector<f64>>,
    /// ‖μ‖, or the onion `max_radius` for the sentinel.
    pub norm: f64,
    pub sims: u64,
}

impl OmsvEval {
    pub fn is_sentinel(&self) -> bool {
        self.mu.is_none()
    }

    pub fn objective(&self) -> f64 {
        self.norm * self.norm
    }
}

/// Runs the onion search on the bench at design `z` and returns its mean shift.
/// A design whose search finds no failure up to `max_radius` scores the
/// sentinel ‖μ‖ = `max_radius`.
pub fn omsv_of_design(
    family: &QuadraticFamily,
    z: &[f64],
    mode: OmsvMode,
    onion_cfg: &OnionConfig,
    seed: u64,
    exec: Execution,
) -> Result<OmsvEval> {
    let bench = family.bench(z)?;
    match onion::onion_search(&bench, onion_cfg, seed, exec) {
        Ok(out) => {
            let mu = match mode {
                OmsvMode::MinNorm => mn_omsv(&out.failures)?,
                OmsvMode::TrueOmsv => true_omsv(&out.failures)?,
            };
            Ok(OmsvEval {
                norm: mu.norm(),
                mu: Some(mu),
                sims: out.evaluations,
            })
        }
        Err(e) => match e.error {
            Error::Initialization { .. } => Ok(OmsvEval {
                mu: None,
                norm: onion_cfg.max_radius,
                sims: e.evaluations,
            }),
            other => Err(other),
        },
    }
}

/// One iterate of the ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeRecord {
    pub iter: usize,
    pub z: Vec<f64>,
    /// ‖μ(z)‖².
    pub obj: f64,
    /// Exact failure probability at z, for evaluation only.
    pub oracle_pf: f64,
    /// Cumulative simulations, finite-difference probes included.
    pub sims: u64,
    pub sentinel: bool,
}

/// Full record of an ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeTrace {
    pub mode: OmsvMode,
    pub seed: u64,
    pub iterations: Vec<OptimizeRecord>,
    pub total_sims: u64,
    /// Stopped on the gradient tolerance rather than the iteration cap.
    pub converged: bool,
}

impl OptimizeTrace {
    pub fn last(&self) -> &OptimizeRecord {
        self.iterations.last().expect("a trace has at least one iterate")
    }

    pub fn initial_oracle_pf(&self) -> f64 {
        self.iterations[0].oracle_pf
    }

    pub fn final_oracle_pf(&self) -> f64 {
        self.last().oracle_pf
    }

    /// Cumulative simulations at the first iterate with oracle_pf ≤ `target`.
    pub fn sims_to_reach(&self, target: f64) -> Option<u64> {
        self.iterations.iter().find(|r| r.oracle_pf <= target).map(|r| r.sims)
    }

    /// CSV with header `iter,znorm,obj,oracle_pf,sims`; znorm is ‖z‖.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,znorm,obj,oracle_pf,sims\n");
        for r in &self.iterations {
            let znorm = r.z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.iter,
                csv_number(Some(znorm)),
                csv_number(Some(r.obj)),
                csv_number(Some(r.oracle_pf)),
                r.sims
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Seed shared by every evaluation of one outer iteration, so the centre and
/// the finite-difference probes see the same onion draws.
fn iteration_seed(seed: u64, iter: usize) -> u64 {
    exec::substream(seed, Phase::Optimize, iter as u64, 0).next_u64()
}

/// Projected gradient ascent on ‖μ(z)‖² with central differences under common
/// random numbers. Stops when the gradient norm drops below `grad_tol` or after
/// `max_outer_iters` steps; the trace ends with the final design.
pub fn run_variational_asais(cfg: &OptimizeConfig, family: &QuadraticFamily, seed: u64) -> Result<OptimizeTrace> {
    cfg.validate(family)?;
    let n = family.design_dim();
    let mut z = cfg.z0.clone();
    let mut sims = 0u64;
    let mut rows = Vec::new();
    let mut converged = false;
    let eval = |z: &[f64], s: u64, exec: Execution| omsv_of_design(family, z, cfg.omsv_mode, &cfg.onion, s, exec);

    for iter in 0..=cfg.max_outer_iters {
        let s = iteration_seed(seed, iter);
        let center = eval(&z, s, cfg.execution)?;
        sims += center.sims;
        let record = |sims| OptimizeRecord {
            iter,
            z: z.clone(),
            obj: center.objective(),
            oracle_pf: family.oracle_pf(&z),
            sims,
            sentinel: center.is_sentinel(),
        };
        if iter == cfg.max_outer_iters {
            rows.push(record(sims));
            break;
        }

        let probes: Vec<Vec<f64>> = (0..2 * n)
            .map(|k| {
                let mut p = z.clone();
                p[k / 2] += if k % 2 == 0 { cfg.fd_step } else { -cfg.fd_step };
                family.project(&mut p);
                p
            })
            .collect();
        let evals = exec::map_indexed(cfg.execution, probes.len(), |k| eval(&probes[k], s, Execution::Sequential));
        let mut values = Vec::with_capacity(evals.len());
        for e in evals {
            let e = e?;
            sims += e.sims;
            values.push(e.objective());
        }
        rows.push(record(sims));

        let grad = DVector::from_fn(n, |i, _| {
            let width = probes[2 * i][i] - probes[2 * i + 1][i];
            if width > 0.0 {
                (values[2 * i] - values[2 * i + 1]) / width
            } else {
                0.0
            }
        });
        if grad.norm() < cfg.grad_tol {
            converged = true;
            break;
        }
        for (v, g) in z.iter_mut().zip(grad.iter()) {
            *v += cfg.step * g;
        }
        family.project(&mut z);
    }

    Ok(OptimizeTrace {
        mode: cfg.omsv_mode,
        seed,
        iterations: rows,
        total_sims: sims,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family() -> QuadraticFamily {
        QuadraticFamily::isotropic(vec![1.0, 0.0], 3.875, vec![1.0, 0.5], vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap()
    }

    fn config(mode: OmsvMode) -> OptimizeConfig {
        OptimizeConfig {
            z0: vec![1.0 - 2f64.sqrt(), 0.5 - 2f64.sqrt()],
            omsv_mode: mode,
            ..Default::default()
        }
    }

    #[test]
    fn true_omsv_lies_beyond_the_boundary() {
        let f = family();
        let z = [0.0, 0.0];
        let e = omsv_of_design(&f, &z, OmsvMode::TrueOmsv, &OnionConfig::default(), 4, Execution::Sequential).unwrap();
        let mu = e.mu.unwrap();
        assert!(mu[0] >= f.offset(&z));
        assert!(e.norm >= f.margin(&z));
    }

    #[test]
    fn both_modes_reach_the_boundary() {
        let f = family();
        let z = [0.3, -0.2];
        for seed in 0..5 {
            let a = omsv_of_design(&f, &z, OmsvMode::MinNorm, &OnionConfig::default(), seed, Execution::Sequential).unwrap();
            let b = omsv_of_design(&f, &z, OmsvMode::TrueOmsv, &OnionConfig::default(), seed, Execution::Sequential).unwrap();
            assert_eq!(a.sims, b.sims);
            assert!(a.norm >= f.margin(&z) && b.norm >= f.margin(&z));
        }
        // the min-norm point is not always the shorter vector
        let a = omsv_of_design(&f, &z, OmsvMode::MinNorm, &OnionConfig::default(), 197, Execution::Sequential).unwrap();
        let b = omsv_of_design(&f, &z, OmsvMode::TrueOmsv, &OnionConfig::default(), 197, Execution::Sequential).unwrap();
        assert!(a.norm > b.norm);
    }

    #[test]
    fn same_seed_same_mean_shift() {
        let f = family();
        let cfg = OnionConfig::default();
        let a = omsv_of_design(&f, &[0.1, 0.2], OmsvMode::TrueOmsv, &cfg, 9, Execution::Sequential).unwrap();
        let b = omsv_of_design(&f, &[0.1, 0.2], OmsvMode::TrueOmsv, &cfg, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unreachable_failures_give_the_sentinel() {
        let f = QuadraticFamily::isotropic(vec![1.0, 0.0], 20.0, vec![0.0], vec![-1.0], vec![1.0]).unwrap();
        let e = omsv_of_design(&f, &[0.0], OmsvMode::TrueOmsv, &OnionConfig::default(), 1, Execution::Sequential).unwrap();
        assert!(e.is_sentinel());
        assert_eq!(e.norm, 8.0);
        assert_eq!(e.sims, 8 * 20);
    }

    #[test]
    fn ascent_improves_the_design() {
        let f = family();
        let t = run_variational_asais(&config(OmsvMode::TrueOmsv), &f, 0).unwrap();
        assert!(t.final_oracle_pf() < t.initial_oracle_pf() / 10.0);
        assert_eq!(t.total_sims, t.last().sims);
        for r in &t.iterations {
            assert!(f.contains(&r.z));
            if !r.sentinel {
                assert!(r.obj.sqrt() >= f.margin(&r.z));
            }
        }
    }

    #[test]
    fn start_at_optimum_stays_put() {
        let f = family();
        let cfg = OptimizeConfig {
            z0: vec![1.0, 0.5],
            ..config(OmsvMode::TrueOmsv)
        };
        let t = run_variational_asais(&cfg, &f, 2).unwrap();
        let z = &t.last().z;
        assert!((z[0] - 1.0).abs() <= cfg.step && (z[1] - 0.5).abs() <= cfg.step);
    }

    #[test]
    fn csv_has_one_row_per_iterate() {
        let t = run_variational_asais(
            &OptimizeConfig {
                max_outer_iters: 3,
                ..config(OmsvMode::MinNorm)
            },
            &family(),
            1,
        )
        .unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("iter,znorm,obj,oracle_pf,sims\n"));
        assert_eq!(csv.lines().count(), t.iterations.len() + 1);
        let back: OptimizeTrace = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn config_is_checked_against_the_box() {
        let f = family();
        let mut cfg = config(OmsvMode::TrueOmsv);
        cfg.z0 = vec![5.0, 0.0];
        assert!(run_variational_asais(&cfg, &f, 0).is_err());
        cfg.z0 = vec![0.0];
        assert!(run_variational_asais(&cfg, &f, 0).is_err());
        cfg.z0 = vec![0.0, 0.0];
        cfg.fd_step = 0.0;
        assert!(run_variational_asais(&cfg, &f, 0).is_err());
    }
}
