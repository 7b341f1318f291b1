//! Sequential vs rayon execution for the three data-parallel hot spots:
//! per-sample LSD probes, the per-seed sweep and the gradient self-check.
//!
//! Build with `--no-default-features` to see the fallback on both arms.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use srda::experiment::{compare_on_moons, gradcheck_suite, initial_model, GradcheckOptions, MoonsShift};
use srda::metrics::mean_lsd_with;
use srda::{Execution, ModelSpec, NoisePlan, PlanKind, TrainConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn lsd_probes(c: &mut Criterion) {
    let (_, target) = MoonsShift { n_per_domain: 2000, ..MoonsShift::default() }.domains(0).unwrap();
    let model = initial_model(&ModelSpec::small_mlp(2, 2), 0).unwrap();
    let mut group = c.benchmark_group("mean_lsd_2000");
    for kind in [PlanKind::Isotropic, PlanKind::Vat] {
        let plan = NoisePlan::new(kind, 0.5);
        for (label, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(kind.name(), label), &exec, |b, &exec| {
                b.iter(|| black_box(mean_lsd_with(&model, &target, &plan, 7, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn seed_sweep(c: &mut Criterion) {
    let shift = MoonsShift { n_per_domain: 200, ..MoonsShift::default() };
    let base = TrainConfig { epochs: 5, batch_size: 64, ..TrainConfig::with_plan(None) };
    let plans = [None, Some(PlanKind::Isotropic)];
    let mut group = c.benchmark_group("seed_sweep_4x2");
    group.sample_size(10);
    for (label, exec) in MODES {
        group.bench_function(label, |b| {
            b.iter(|| black_box(compare_on_moons(&shift, &ModelSpec::small_mlp(2, 2), &base, &plans, &[0, 1, 2, 3], exec).unwrap()))
        });
    }
    group.finish();
}

fn gradcheck(c: &mut Criterion) {
    let opts = GradcheckOptions { base_seed: 0, seeds: 10, corrupt_segment: None };
    let mut group = c.benchmark_group("gradcheck_10");
    for (label, exec) in MODES {
        group.bench_function(label, |b| b.iter(|| black_box(gradcheck_suite(&opts, exec).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, lsd_probes, seed_sweep, gradcheck);
criterion_main!(benches);
