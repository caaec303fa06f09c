use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// One row of the estimator trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub pf: f64,
    pub fom: Option<f64>,
    /// Cumulative indicator evaluations, initialization included.
    pub sims: u64,
}

/// Outcome of one estimation run.
///
/// `wall_time` is not serialized, so the JSON form of a report depends only on
/// the configuration and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub bench: String,
    pub seed: u64,
    pub pf_estimate: f64,
    pub fom: Option<f64>,
    pub converged: bool,
    /// Every indicator evaluation, initialization included.
    pub n_simulations: u64,
    /// Evaluations that returned "fail".
    pub n_failures: u64,
    pub iterations: usize,
    /// Mixture components of the last proposal (0 for plain Monte Carlo).
    pub n_components: usize,
    pub per_iteration: Vec<IterationRecord>,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Formats an f64 so that parsing it back gives the same bits; `nan` marks a
/// missing value.
pub fn csv_number(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:?}"),
        None => "nan".to_string(),
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Trajectory as CSV with header `iter,pf,fom,sims`.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("iter,pf,fom,sims\n");
        for r in &self.per_iteration {
            let _ = writeln!(out, "{},{},{},{}", r.iter, csv_number(Some(r.pf)), csv_number(r.fom), r.sims);
        }
        out
    }

    /// Relative error |P̂/P − 1| against a reference probability.
    pub fn relative_error(&self, reference: f64) -> f64 {
        (self.pf_estimate / reference - 1.0).abs()
    }
}
