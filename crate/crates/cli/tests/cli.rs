use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, subcommand: &str, config: &str) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_vis-yield"))
        .args([subcommand, "--quiet", "--config"])
        .arg(&path)
        .arg("--output")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn out(dir: &TempDir, rel: &str) -> PathBuf {
    dir.path().join("out").join(rel)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn always_failing_bench_gives_probability_one() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        "estimate",
        r#"{"version": 1, "bench": {"dim": 3, "kind": {"type": "constant", "fails": true}},
            "method": "mc", "seeds": [1, 2], "mc": {"batch": 1000}}"#,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = json(&out(&dir, "summary.json"));
    assert_eq!(summary["mean_pf"], 1.0);
    for seed in [1, 2] {
        let r = json(&out(&dir, &format!("run_{seed}.json")));
        assert_eq!(r["pf_estimate"], 1.0);
        assert_eq!(r["converged"], true);
    }
}

#[test]
fn summary_matches_the_per_seed_reports() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        "estimate",
        r#"{"version": 1, "bench": {"dim": 4, "kind": {"type": "axis", "axis": 2, "threshold": 3.0}},
            "method": "beyond:full_covariance", "seeds": [5, 6, 7]}"#,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = json(&out(&dir, "summary.json"));
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    let mut total = 0.0;
    for r in runs {
        let seed = r["seed"].as_u64().unwrap();
        let report = json(&out(&dir, &format!("run_{seed}.json")));
        assert_eq!(r["pf"], report["pf_estimate"]);
        assert_eq!(r["sims"], report["n_simulations"]);
        total += report["pf_estimate"].as_f64().unwrap();

        // the trajectory's last row is the reported estimate, bit for bit
        let csv = fs::read_to_string(out(&dir, &format!("traj_{seed}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iter,pf,fom,sims"));
        let last: Vec<&str> = lines.last().unwrap().split(',').collect();
        assert_eq!(last[1].parse::<f64>().unwrap(), report["pf_estimate"].as_f64().unwrap());
        assert_eq!(last[3].parse::<u64>().unwrap(), report["n_simulations"].as_u64().unwrap());
    }
    let mean = summary["mean_pf"].as_f64().unwrap();
    assert!((mean - total / 3.0).abs() <= 1e-15 * mean);
    assert_eq!(summary["method"], "beyond:full_covariance");
}

#[test]
fn missing_bench_is_named() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "estimate", r#"{"version": 1, "method": "mc", "seeds": [0]}"#);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bench"), "{}", stderr(&o));
}

#[test]
fn unknown_field_is_named_with_its_path() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        "estimate",
        r#"{"version": 1, "bench": {"dim": 2, "kind": {"type": "axis", "axis": 0, "threshold": 3.0}},
            "method": "mnis", "seeds": [0], "beyond": {"draws": 10}}"#,
    );
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("beyond") && err.contains("draws"), "{err}");
}

#[test]
fn compare_needs_two_methods() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        "compare",
        r#"{"version": 1, "bench": {"dim": 2, "kind": {"type": "axis", "axis": 0, "threshold": 3.0}},
            "methods": ["mnis"], "seeds": [0]}"#,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("methods"));
}

#[test]
fn external_bench_without_reference_is_rejected() {
    let dir = TempDir::new().unwrap();
    let config = format!(
        r#"{{"version": 1, "bench": {{"dim": 2, "kind": {{"type": "external", "command": {:?}}}}},
            "methods": ["mnis", "beyond"], "seeds": [0]}}"#,
        env!("CARGO_BIN_EXE_vis-yield-stub")
    );
    let o = run(dir.path(), "compare", &config);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mc"), "{}", stderr(&o));
}

#[test]
fn compare_writes_a_table_per_method() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        "compare",
        r#"{"version": 1, "bench": {"dim": 3, "kind": {"type": "axis", "axis": 0, "threshold": 2.5}},
            "methods": ["mc", "mnis", "beyond:mean_shift_only"], "seeds": [0, 1]}"#,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out(&dir, "table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("method,runs,mean_pf,rel_error,mean_sims,speedup,incorrect"));
    let methods: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["mc", "mnis", "beyond:mean_shift_only"]);
    for sub in ["mc", "mnis", "beyond-mean_shift_only"] {
        assert!(out(&dir, &format!("{sub}/run_0.json")).exists(), "{sub}");
    }
}

#[test]
fn unconverged_runs_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        "estimate",
        r#"{"version": 1, "bench": {"dim": 2, "kind": {"type": "axis", "axis": 0, "threshold": 4.5}},
            "method": "mc", "seeds": [0], "mc": {"batch": 1000, "max_draws": 2000}}"#,
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(json(&out(&dir, "run_0.json"))["converged"], false);
}

const OPTIMIZE: &str = r#"{
    "version": 1,
    "seeds": [0, 1],
    "optimize": {
        "family": {"a": [1.0, 0.0], "c0": 3.875, "c1": [1.0, 0.5], "c2": [[1.0, 0.0], [0.0, 1.0]],
                   "lower": [-3.0, -3.0], "upper": [3.0, 3.0]},
        "config": {"z0": [-0.4, -0.9], "max_outer_iters": 5},
        "modes": ["true_omsv", "min_norm"]
    }
}"#;

#[test]
fn optimize_writes_a_trace_per_mode_and_seed() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "optimize", OPTIMIZE);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = json(&out(&dir, "summary.json"));
    let modes = summary.as_array().unwrap();
    assert_eq!(modes.len(), 2);
    for (m, label) in modes.iter().zip(["true_omsv", "min_norm"]) {
        assert_eq!(m["mode"], label);
        for t in m["traces"].as_array().unwrap() {
            let seed = t["seed"].as_u64().unwrap();
            let csv = fs::read_to_string(out(&dir, &format!("{label}/traj_{seed}.csv"))).unwrap();
            let mut lines = csv.lines();
            assert_eq!(lines.next(), Some("iter,znorm,obj,oracle_pf,sims"));
            let last: Vec<&str> = lines.last().unwrap().split(',').collect();
            assert_eq!(last[3].parse::<f64>().unwrap(), t["final_oracle_pf"].as_f64().unwrap());
            let run = json(&out(&dir, &format!("{label}/run_{seed}.json")));
            assert_eq!(run["total_sims"], t["total_sims"]);
        }
    }
}

#[test]
fn design_outside_the_box_is_rejected() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "optimize", &OPTIMIZE.replace("[-0.4, -0.9]", "[-0.4, -3.5]"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("z0"), "{}", stderr(&o));
}

#[test]
fn seeds_flag_overrides_the_config() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("config.json");
    fs::write(
        &path,
        r#"{"version": 1, "bench": {"dim": 2, "kind": {"type": "constant", "fails": true}}, "method": "mc", "seeds": [0]}"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vis-yield"))
        .args(["estimate", "--quiet", "--seeds", "8,9", "--config"])
        .arg(&path)
        .arg("--output")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out(&dir, "run_8.json").exists() && out(&dir, "run_9.json").exists());
    assert!(!out(&dir, "run_0.json").exists());
}
