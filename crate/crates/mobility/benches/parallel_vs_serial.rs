//! Compares the rayon-parallel ensemble paths against the sequential
//! fallback on the two dominant workloads: Euler–Maruyama path ensembles and
//! elliptic operator application inside the corrector solve.
//!
//! Run with `cargo bench -p mobility`; disabling the default `parallel`
//! feature makes both benches run the sequential path (the comparison is
//! meaningful with the feature on, the default).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mobility::diffusion::{simulate_ensemble, simulate_ensemble_seq, SimParams};
use mobility::elliptic::{homogenized_matrix, CubeGrid};
use mobility::environment::{build_environment, EnvParams};
use mobility::geom::ZERO;

fn bench_path_ensembles(c: &mut Criterion) {
    let env = build_environment(EnvParams::default()).unwrap();
    let params = SimParams {
        tilt: 0.2,
        dt: 0.01,
        horizon: 50.0,
        n_paths: 32,
        seed: 7,
        absorb_level: None,
    };
    let mut group = c.benchmark_group("path_ensemble");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", params.n_paths), |b| {
        b.iter(|| simulate_ensemble(&env, &params, ZERO).unwrap())
    });
    group.bench_function(BenchmarkId::new("serial", params.n_paths), |b| {
        b.iter(|| simulate_ensemble_seq(&env, &params, ZERO).unwrap())
    });
    group.finish();
}

fn bench_homogenized_matrix(c: &mut Criterion) {
    let env = build_environment(EnvParams::default()).unwrap();
    let grid = CubeGrid::new(2, 2, 37).unwrap();
    let mut group = c.benchmark_group("homogenized_matrix");
    group.sample_size(10);
    // corrector solves fan out per direction with the `parallel` feature
    group.bench_function("correctors", |b| {
        b.iter(|| homogenized_matrix(&env, &grid, 1e-8).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_path_ensembles, bench_homogenized_matrix);
criterion_main!(benches);
