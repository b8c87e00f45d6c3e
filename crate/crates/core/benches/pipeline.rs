//! Sequential against data-parallel execution of the hot stages.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tempmode::acf::{estimate_acf_with, AcfOptions};
use tempmode::analytic;
use tempmode::exec::ExecPolicy;
use tempmode::signal::SampleGrid;
use tempmode::synth::{sample_mode_injected_with, InjectionOptions, LawKind, QuadratureLaw};
use tempmode::tomography::project_ensemble_with;

const POLICIES: [(&str, ExecPolicy); 2] = [
    ("sequential", ExecPolicy::Sequential),
    ("parallel", ExecPolicy::Parallel),
];

fn stages(c: &mut Criterion) {
    let grid = SampleGrid::centered(0.5e-9, 400).unwrap();
    let phi = analytic::phi(60e6, &grid).unwrap();
    let law = QuadratureLaw::fixed(LawKind::LossyFock { n: 1, eta: 0.79 });
    let n = 8192;
    let set = sample_mode_injected_with(
        grid,
        &[(phi.clone(), law.clone())],
        n,
        1,
        InjectionOptions::default(),
    )
    .unwrap();

    let mut g = c.benchmark_group("synthesis");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        let opts = InjectionOptions {
            policy,
            ..InjectionOptions::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, &opts| {
            b.iter(|| sample_mode_injected_with(grid, &[(phi.clone(), law.clone())], n, 1, opts))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("autocorrelation");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &policy, |b, &p| {
            b.iter(|| estimate_acf_with(black_box(&set), AcfOptions::default(), p))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("projection");
    for (name, policy) in POLICIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &policy, |b, &p| {
            b.iter(|| project_ensemble_with(black_box(&set), &phi, p))
        });
    }
    g.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
