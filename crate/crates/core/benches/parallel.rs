//! Parallel against sequential execution of the hot paths.
//!
//! With the default `parallel` feature each workload runs once inside a
//! one-thread rayon pool and once on the global pool. Built with
//! `--no-default-features` only the plain-loop fallback is measured.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use polyflow::diagnostics::log_oscillation;
use polyflow::nonlinearity::f_tilde;
use polyflow::norms::x_norm;
use polyflow::semigroup::g_trajectory;
use polyflow::solver::{picard_solve, FlowParams};
use polyflow::target::TargetManifold;
use polyflow::GridSpec;

const BOX: f64 = 2.0 * std::f64::consts::PI * 8.0;

fn modes() -> Vec<(&'static str, Option<usize>)> {
    if polyflow::par::is_parallel() {
        vec![("sequential", Some(1)), ("parallel", None)]
    } else {
        vec![("fallback", None)]
    }
}

fn run<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(t) = threads {
        return rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .expect("thread pool")
            .install(f);
    }
    let _ = threads;
    f()
}

fn bench_f_tilde(c: &mut Criterion) {
    let tm = TargetManifold::default();
    let mut group = c.benchmark_group("f_tilde_2d_64");
    let u = log_oscillation(&GridSpec::new(2, BOX, 64).unwrap(), 0.05).unwrap();
    for (name, threads) in modes() {
        group.bench_function(BenchmarkId::new(name, 2), |b| {
            b.iter(|| run(threads, || f_tilde(black_box(&u), &tm, 2).unwrap()))
        });
    }
    group.finish();
}

fn bench_x_norm(c: &mut Criterion) {
    let spec = GridSpec::new(1, BOX, 256).unwrap();
    let u0 = log_oscillation(&spec, 0.05).unwrap();
    let p = FlowParams { steps: 64, ..FlowParams::default() };
    let cyl = p.cylinders(&spec).unwrap();
    let traj = g_trajectory(&u0, 1, &p.times()).unwrap();
    let mut group = c.benchmark_group("x_norm_1d_256");
    for (name, threads) in modes() {
        group.bench_function(name, |b| b.iter(|| run(threads, || x_norm(black_box(&traj), 1, &cyl).unwrap())));
    }
    group.finish();
}

fn bench_picard(c: &mut Criterion) {
    let tm = TargetManifold::default();
    let spec = GridSpec::new(1, BOX, 64).unwrap();
    let u0 = log_oscillation(&spec, 0.05).unwrap();
    let p = FlowParams { steps: 32, ball_radius: 0.05, ..FlowParams::default() };
    let mut group = c.benchmark_group("picard_1d_64");
    group.sample_size(10);
    for (name, threads) in modes() {
        group.bench_function(name, |b| b.iter(|| run(threads, || picard_solve(black_box(&u0), &p, &tm).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, bench_f_tilde, bench_x_norm, bench_picard);
criterion_main!(benches);
