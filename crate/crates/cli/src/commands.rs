//! The `estimate`, `compare` and `optimize` commands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vis_yield::optimize::{run_variational_asais, OmsvMode, OptimizeConfig, OptimizeTrace};
use vis_yield::sampling::{run_beyond, run_mc, run_mnis, RunReport};
use vis_yield::testbench::Testbench;

use crate::config::{ConfigError, ExperimentConfig, Method};
use crate::table::ComparisonTable;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run failed for seed {seed}: {source}")]
    Run { seed: u64, source: vis_yield::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub quiet: bool,
}

impl Overrides {
    /// Loads the config at `path` and applies the overrides.
    pub fn load(&self, path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(out) = &self.output {
            cfg.output_dir = out.clone();
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

/// One seed of an estimation run, as listed in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub pf: f64,
    pub fom: Option<f64>,
    pub sims: u64,
    pub converged: bool,
    pub rel_error: Option<f64>,
}

/// Aggregate over the seeds of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub bench: String,
    pub oracle_pf: Option<f64>,
    pub mean_pf: f64,
    /// Sample standard deviation over seeds (0 for a single seed).
    pub std_pf: f64,
    pub mean_sims: f64,
    pub converged_runs: usize,
    pub runs: Vec<RunSummary>,
}

impl MethodSummary {
    pub fn from_reports(method: &str, bench: &Testbench, reports: &[RunReport]) -> Self {
        let n = reports.len() as f64;
        let mean_pf = reports.iter().map(|r| r.pf_estimate).sum::<f64>() / n;
        let var = if reports.len() > 1 {
            reports.iter().map(|r| (r.pf_estimate - mean_pf).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let oracle = bench.oracle_pf();
        Self {
            method: method.to_string(),
            bench: bench.name().to_string(),
            oracle_pf: oracle,
            mean_pf,
            std_pf: var.sqrt(),
            mean_sims: reports.iter().map(|r| r.n_simulations as f64).sum::<f64>() / n,
            converged_runs: reports.iter().filter(|r| r.converged).count(),
            runs: reports
                .iter()
                .map(|r| RunSummary {
                    seed: r.seed,
                    pf: r.pf_estimate,
                    fom: r.fom,
                    sims: r.n_simulations,
                    converged: r.converged,
                    rel_error: oracle.map(|o| r.relative_error(o)),
                })
                .collect(),
        }
    }

    pub fn all_converged(&self) -> bool {
        self.converged_runs == self.runs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub table: ComparisonTable,
    pub methods: Vec<MethodSummary>,
}

/// One optimizer trace, as listed in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub seed: u64,
    pub initial_oracle_pf: f64,
    pub final_oracle_pf: f64,
    pub final_z: Vec<f64>,
    pub total_sims: u64,
    pub sims_to_target: Option<u64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: OmsvMode,
    pub target_pf: f64,
    /// Median over seeds of `sims_to_target`; absent if any seed missed it.
    pub median_sims_to_target: Option<f64>,
    pub traces: Vec<TraceSummary>,
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summaries serialize");
    s.push('\n');
    s
}

/// Maps `f` over the seeds, concurrently when the parallel feature is on.
/// Results come back in seed-list order.
fn over_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| f(s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.iter().map(|&s| f(s)).collect()
    }
}

fn run_method(cfg: &ExperimentConfig, method: Method, bench: &Testbench) -> Result<Vec<RunReport>, CliError> {
    let results = over_seeds(&cfg.seeds, |seed| {
        let r = match method {
            Method::Mc => run_mc(bench, &cfg.mc_config(), seed),
            Method::Mnis => run_mnis(bench, &cfg.mnis_config(), seed),
            Method::Beyond(tier) => run_beyond(bench, &cfg.beyond_for(tier), seed),
            Method::Optimize => unreachable!("optimize is not an estimator"),
        };
        r.map_err(|source| CliError::Run { seed, source })
    });
    results.into_iter().collect()
}

fn write_runs(dir: &Path, reports: &[RunReport]) -> Result<(), CliError> {
    create_dir(dir)?;
    for r in reports {
        let mut json = r.to_json();
        json.push('\n');
        write(&dir.join(format!("run_{}.json", r.seed)), &json)?;
        write(&dir.join(format!("traj_{}.csv", r.seed)), &r.trajectory_csv())?;
    }
    Ok(())
}

fn build_bench(cfg: &ExperimentConfig) -> Result<Testbench, CliError> {
    let spec = cfg.require_bench()?;
    spec.build().map_err(|e| ConfigError::invalid("bench", e).into())
}

/// Directory-safe form of a method label.
fn dir_name(label: &str) -> String {
    label.replace(':', "-")
}

/// Runs one estimator over every seed. Writes `run_<seed>.json`,
/// `traj_<seed>.csv` and `summary.json` into the output directory.
pub fn estimate(cfg: &ExperimentConfig, quiet: bool) -> Result<(MethodSummary, i32), CliError> {
    let method = match cfg.method {
        None => return Err(ConfigError::invalid("method", "missing field `method` (required by estimate)").into()),
        Some(Method::Optimize) => {
            return Err(ConfigError::invalid("method", "use the optimize command for method `optimize`").into())
        }
        Some(m) => m,
    };
    let bench = build_bench(cfg)?;
    let label = method.label(cfg.default_tier());
    let reports = run_method(cfg, method, &bench)?;
    write_runs(&cfg.output_dir, &reports)?;
    let summary = MethodSummary::from_reports(&label, &bench, &reports);
    write(&cfg.output_dir.join("summary.json"), &to_json(&summary))?;
    if !quiet {
        for r in &summary.runs {
            println!(
                "{label} seed {}: pf {:.6e} fom {} sims {} {}",
                r.seed,
                r.pf,
                r.fom.map_or("-".to_string(), |f| format!("{f:.4}")),
                r.sims,
                if r.converged { "converged" } else { "NOT converged" }
            );
        }
        println!("mean pf {:.6e} std {:.3e} mean sims {:.0}", summary.mean_pf, summary.std_pf, summary.mean_sims);
    }
    let code = if summary.all_converged() { EXIT_OK } else { EXIT_NOT_CONVERGED };
    Ok((summary, code))
}

/// Runs every listed method on the same seeds and tabulates them. Relative
/// errors are against the bench oracle, or the MC row when there is none.
pub fn compare(cfg: &ExperimentConfig, quiet: bool) -> Result<(CompareSummary, i32), CliError> {
    if cfg.methods.len() < 2 {
        return Err(ConfigError::invalid("methods", "compare needs at least two methods").into());
    }
    if cfg.methods.contains(&Method::Optimize) {
        return Err(ConfigError::invalid("methods", "`optimize` cannot be compared").into());
    }
    let tier = cfg.default_tier();
    let labels: Vec<String> = cfg.methods.iter().map(|m| m.label(tier)).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(ConfigError::invalid("methods", format!("`{l}` is listed twice")).into());
        }
    }
    let bench = build_bench(cfg)?;
    let has_mc = cfg.methods.contains(&Method::Mc);
    if bench.oracle_pf().is_none() && !has_mc {
        return Err(ConfigError::invalid("methods", "bench has no oracle; include `mc` as the reference").into());
    }

    let mut all = Vec::with_capacity(labels.len());
    let mut summaries = Vec::with_capacity(labels.len());
    let mut converged = true;
    for (method, label) in cfg.methods.iter().zip(&labels) {
        let reports = run_method(cfg, *method, &bench)?;
        write_runs(&cfg.output_dir.join(dir_name(label)), &reports)?;
        let s = MethodSummary::from_reports(label, &bench, &reports);
        converged &= s.all_converged();
        summaries.push(s);
        all.push((label.clone(), reports));
    }
    let (reference, source) = match bench.oracle_pf() {
        Some(o) => (o, "oracle"),
        None => {
            let mc = summaries.iter().find(|s| s.method == "mc").expect("mc row checked above");
            (mc.mean_pf, "mc")
        }
    };
    let table = ComparisonTable::build(reference, source, &all, has_mc.then_some("mc"));
    write(&cfg.output_dir.join("table.csv"), &table.to_csv())?;
    write(&cfg.output_dir.join("table.txt"), &table.to_text())?;
    let summary = CompareSummary {
        table,
        methods: summaries,
    };
    write(&cfg.output_dir.join("summary.json"), &to_json(&summary))?;
    if !quiet {
        print!("{}", summary.table.to_text());
    }
    let code = if converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    Ok((summary, code))
}

fn median(mut v: Vec<u64>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
    }
}

/// Runs the optimizer for each requested mode on the shared seeds. Writes
/// `<mode>/traj_<seed>.csv`, `<mode>/run_<seed>.json` and `summary.json`.
pub fn optimize(cfg: &ExperimentConfig, quiet: bool) -> Result<(Vec<ModeSummary>, i32), CliError> {
    let Some(section) = &cfg.optimize else {
        return Err(ConfigError::invalid("optimize", "missing section `optimize` (required by optimize)").into());
    };
    let mut out = Vec::new();
    for mode in section.modes() {
        let ocfg = OptimizeConfig {
            omsv_mode: mode,
            ..section.config.clone()
        };
        let traces: Vec<OptimizeTrace> = over_seeds(&cfg.seeds, |seed| {
            run_variational_asais(&ocfg, &section.family, seed).map_err(|source| CliError::Run { seed, source })
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
        let dir = cfg.output_dir.join(mode.label());
        create_dir(&dir)?;
        for t in &traces {
            write(&dir.join(format!("traj_{}.csv", t.seed)), &t.to_csv())?;
            let mut json = t.to_json();
            json.push('\n');
            write(&dir.join(format!("run_{}.json", t.seed)), &json)?;
        }
        let summaries: Vec<TraceSummary> = traces
            .iter()
            .map(|t| TraceSummary {
                seed: t.seed,
                initial_oracle_pf: t.initial_oracle_pf(),
                final_oracle_pf: t.final_oracle_pf(),
                final_z: t.last().z.clone(),
                total_sims: t.total_sims,
                sims_to_target: t.sims_to_reach(section.target_pf),
                converged: t.converged,
            })
            .collect();
        let reached: Option<Vec<u64>> = summaries.iter().map(|s| s.sims_to_target).collect();
        let m = ModeSummary {
            mode,
            target_pf: section.target_pf,
            median_sims_to_target: reached.map(median),
            traces: summaries,
        };
        if !quiet {
            for t in &m.traces {
                println!(
                    "{} seed {}: oracle pf {:.3e} -> {:.3e}, sims {}",
                    mode.label(),
                    t.seed,
                    t.initial_oracle_pf,
                    t.final_oracle_pf,
                    t.total_sims
                );
            }
        }
        out.push(m);
    }
    create_dir(&cfg.output_dir)?;
    write(&cfg.output_dir.join("summary.json"), &to_json(&out))?;
    Ok((out, EXIT_OK))
}
