use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nse3d::lp::LittlewoodPaley;
use nse3d::solver::{random_field, SolverConfig, Stepper};
use nse3d::{par, Spectral, TorusGrid};

// Build with `--no-default-features` for the rayon-free path; in the default
// build "sequential" is a one-worker pool.
fn pools() -> Vec<(&'static str, usize)> {
    let all = par::available_threads();
    if cfg!(feature = "parallel") {
        vec![("sequential", 1), ("parallel", all)]
    } else {
        vec![("sequential", 1)]
    }
}

fn kernels(c: &mut Criterion) {
    for n in [32, 64] {
        let sp = Arc::new(Spectral::new(TorusGrid::new(n, 1.0).unwrap()));
        let u = random_field(&sp, 1, 4.0, 1.0);
        let lp = LittlewoodPaley::new(sp.clone());
        let stepper = Stepper::new(sp.clone(), &SolverConfig::new(sp.grid(), 0.05, 1e-4)).unwrap();
        let mut g = c.benchmark_group(format!("N{n}"));
        g.sample_size(10);
        for (label, threads) in pools() {
            g.bench_function(BenchmarkId::new("fft_round_trip", label), |b| {
                par::with_threads(threads, || b.iter(|| sp.to_spectral(&sp.to_physical(&u))))
            });
            g.bench_function(BenchmarkId::new("nonlinear_term", label), |b| {
                par::with_threads(threads, || b.iter(|| sp.nonlinear_term(&u)))
            });
            g.bench_function(BenchmarkId::new("shell_norms", label), |b| {
                par::with_threads(threads, || b.iter(|| lp.shell_norms(&u)))
            });
            g.bench_function(BenchmarkId::new("rk3_step", label), |b| {
                let mut s = stepper.start(u.clone()).unwrap();
                par::with_threads(threads, || b.iter(|| stepper.step(&mut s).unwrap()))
            });
        }
        g.finish();
    }
}

criterion_group!(benches, kernels);
criterion_main!(benches);
