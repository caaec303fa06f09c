use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use vis_yield::distributions::{GaussianProposal, Proposal};
use vis_yield::sampling::{is_step, run_beyond, BeyondConfig, EstimatorState};
use vis_yield::testbench::axis_bench;
use vis_yield::visfit::{FailureSet, Tier};
use vis_yield::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn importance_step(c: &mut Criterion) {
    let bench = axis_bench(18, 0, 4.0).unwrap();
    let mut mean = DVector::zeros(18);
    mean[0] = 4.2;
    let q: Proposal = GaussianProposal::mean_shift(mean).into();
    let mut group = c.benchmark_group("is_step");
    for draws in [2_000, 20_000] {
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, draws), &draws, |b, &k| {
                b.iter(|| {
                    let mut state = EstimatorState::new(k, 0, FailureSet::new(18));
                    is_step(&bench, &q, k, &mut state, 7, exec).unwrap();
                    state.estimate()
                })
            });
        }
    }
    group.finish();
}

fn full_run(c: &mut Criterion) {
    let bench = axis_bench(18, 0, 4.0).unwrap();
    let mut group = c.benchmark_group("run_beyond");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = BeyondConfig {
            execution: exec,
            ..BeyondConfig::with_tier(Tier::MixtureSkewNormal)
        };
        group.bench_function(name, |b| b.iter(|| run_beyond(&bench, &cfg, 3).unwrap().pf_estimate));
    }
    group.finish();
}

criterion_group!(benches, importance_step, full_run);
criterion_main!(benches);
