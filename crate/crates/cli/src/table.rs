//! Side-by-side comparison of estimators run on the same seeds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use vis_yield::sampling::{csv_number, RunReport};

/// Relative error above which a run counts as incorrect.
pub const INCORRECT_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub runs: usize,
    pub mean_pf: f64,
    /// |mean_pf / reference − 1|.
    pub rel_error: f64,
    pub mean_sims: f64,
    /// Mean MC sims over mean method sims; absent without an MC row.
    pub speedup: Option<f64>,
    /// Runs whose own relative error exceeds the threshold.
    pub incorrect: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub reference: f64,
    /// `oracle` or `mc`.
    pub reference_source: String,
    pub rows: Vec<ComparisonRow>,
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

impl ComparisonTable {
    /// Builds the table from per-method runs (each over the same seeds).
    /// `mc_label` names the row that serves as the speedup baseline.
    pub fn build(reference: f64, reference_source: &str, methods: &[(String, Vec<RunReport>)], mc_label: Option<&str>) -> Self {
        let mc_sims = mc_label
            .and_then(|l| methods.iter().find(|(m, _)| m == l))
            .map(|(_, runs)| mean(runs.iter().map(|r| r.n_simulations as f64)));
        let rows = methods
            .iter()
            .map(|(method, runs)| {
                let mean_pf = mean(runs.iter().map(|r| r.pf_estimate));
                let mean_sims = mean(runs.iter().map(|r| r.n_simulations as f64));
                ComparisonRow {
                    method: method.clone(),
                    runs: runs.len(),
                    mean_pf,
                    rel_error: (mean_pf / reference - 1.0).abs(),
                    mean_sims,
                    speedup: mc_sims.map(|mc| mc / mean_sims),
                    incorrect: runs
                        .iter()
                        .filter(|r| r.relative_error(reference) > INCORRECT_THRESHOLD)
                        .count(),
                }
            })
            .collect();
        Self {
            reference,
            reference_source: reference_source.to_string(),
            rows,
        }
    }

    pub fn row(&self, method: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,runs,mean_pf,rel_error,mean_sims,speedup,incorrect\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.method,
                r.runs,
                csv_number(Some(r.mean_pf)),
                csv_number(Some(r.rel_error)),
                csv_number(Some(r.mean_sims)),
                csv_number(r.speedup),
                r.incorrect
            );
        }
        out
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let header = ["method", "runs", "mean pf", "rel err", "mean sims", "speedup", "incorrect"];
        let cells: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.clone(),
                    r.runs.to_string(),
                    format!("{:.4e}", r.mean_pf),
                    format!("{:.2}%", 100.0 * r.rel_error),
                    format!("{:.0}", r.mean_sims),
                    r.speedup.map_or("-".to_string(), |s| format!("{s:.1}x")),
                    r.incorrect.to_string(),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| cells.iter().map(|c| c[i].len()).chain([header[i].len()]).max().unwrap_or(0))
            .collect();
        let line = |cols: &[&str]| {
            let mut s = String::new();
            for (i, c) in cols.iter().enumerate() {
                if i == 0 {
                    let _ = write!(s, "{c:<w$}", w = widths[i]);
                } else {
                    let _ = write!(s, "  {c:>w$}", w = widths[i]);
                }
            }
            s.push('\n');
            s
        };
        let mut out = format!("reference pf {:.6e} ({})\n", self.reference, self.reference_source);
        out.push_str(&line(&header));
        for c in &cells {
            let refs: Vec<&str> = c.iter().map(String::as_str).collect();
            out.push_str(&line(&refs));
        }
        out
    }
}
