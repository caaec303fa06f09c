use nalgebra::DVector;

use crate::distributions::special::log_sum_exp;
use crate::distributions::Proposal;
use crate::exec::{self, Execution};
use crate::visfit::FailureSet;

/// A distribution that produced archive points.
#[derive(Debug, Clone)]
enum Generator {
    /// Uniform on the annulus inner ≤ ‖x‖ ≤ outer.
    Shell { inner: f64, outer: f64, log_density: f64 },
    Proposal(Proposal),
}

impl Generator {
    fn log_density(&self, x: &DVector<f64>) -> f64 {
        match self {
            Generator::Shell {
                inner,
                outer,
                log_density,
            } => {
                let r = x.norm();
                if r >= *inner && r <= *outer {
                    *log_density
                } else {
                    f64::NEG_INFINITY
                }
            }
            Generator::Proposal(q) => q.log_density(x),
        }
    }
}

/// Every generator of a run with its draw count, and for each archived point
/// ln Σ_g n_g·g(x). The archive's ln g is kept at ln ḡ(x), the density of the
/// pooled draws (the balance heuristic of multiple importance sampling).
#[derive(Debug, Clone, Default)]
pub(crate) struct GeneratorMixture {
    generators: Vec<(f64, Generator)>,
    total: f64,
    log_sums: Vec<f64>,
}

impl GeneratorMixture {
    pub fn add_shell(&mut self, n: usize, inner: f64, outer: f64, log_density: f64) {
        self.push(
            n,
            Generator::Shell {
                inner,
                outer,
                log_density,
            },
        );
    }

    fn push(&mut self, n: usize, g: Generator) {
        self.generators.push(((n as f64).ln(), g));
        self.total += n as f64;
    }

    /// Records that `n` draws were made from `q`, then refreshes ln ḡ over the
    /// whole archive.
    pub fn add_proposal(&mut self, n: usize, q: &Proposal, archive: &mut FailureSet, exec: Execution) {
        let ln_n = (n as f64).ln();
        let known = self.log_sums.len();
        let samples = archive.samples();
        let updates = exec::map_indexed(exec, known, |i| ln_n + q.log_density(&samples[i].point));
        for (s, u) in self.log_sums.iter_mut().zip(updates) {
            *s = log_sum_exp(&[*s, u]);
        }
        self.push(n, Generator::Proposal(q.clone()));
        self.cover(archive, exec);
    }

    /// Computes ln Σ n_g·g(x) for archive points not seen yet and writes ln ḡ
    /// into every sample.
    pub fn cover(&mut self, archive: &mut FailureSet, exec: Execution) {
        let known = self.log_sums.len();
        let samples = archive.samples();
        let fresh = exec::map_indexed(exec, samples.len() - known, |j| {
            let x = &samples[known + j].point;
            let terms: Vec<f64> = self.generators.iter().map(|(ln_n, g)| ln_n + g.log_density(x)).collect();
            log_sum_exp(&terms)
        });
        self.log_sums.extend(fresh);
        let ln_total = self.total.ln();
        let sums = &self.log_sums;
        archive.set_log_generators(|i, _| sums[i] - ln_total);
    }
}
