use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use rwre_bench::{env, expl_trajectory, laws, SEED};
use rwre_core::criteria::discovery::{discover, EPrimePolicy};
use rwre_core::hypercube::QuenchedHypercube;
use rwre_core::regeneration::extract;
use rwre_core::rng::walk_seed;
use rwre_core::walk::{run, Walker};
use rwre_core::{RegenParams, Site, StopSpec, UnitHypercube};

fn walk_steps(c: &mut Criterion) {
    let mut g = c.benchmark_group("walk");
    let steps = 10_000u64;
    g.throughput(Throughput::Elements(steps));
    for (name, law) in laws() {
        let e = env(&law, 1);
        let d = law.dim();
        g.bench_function(BenchmarkId::new("step", name), |b| {
            b.iter(|| {
                let mut w = Walker::new(Site::origin(d), walk_seed(SEED, 1, 0));
                for _ in 0..steps {
                    w.step(&e);
                }
                black_box(w.position)
            })
        });
        let stop = StopSpec::steps(steps).unwrap();
        g.bench_function(BenchmarkId::new("trajectory", name), |b| {
            b.iter(|| black_box(run(&e, Site::origin(d), &stop, walk_seed(SEED, 1, 0)).unwrap()))
        });
    }
    g.finish();
}

fn hypercube(c: &mut Criterion) {
    let mut g = c.benchmark_group("hypercube");
    for (name, law) in laws() {
        let d = law.dim();
        let e = env(&law, 2);
        let qh = QuenchedHypercube::new(&e, UnitHypercube::at(Site::origin(d))).unwrap();
        g.bench_function(BenchmarkId::new("analyze", name), |b| b.iter(|| black_box(qh.analyze(2).unwrap())));
    }
    g.finish();
}

fn regeneration(c: &mut Criterion) {
    let steps = 100_000;
    let t = expl_trajectory(steps);
    let s = 0.5f64.sqrt();
    let params = RegenParams::default_for(&[s, s], steps).unwrap();
    let mut g = c.benchmark_group("regeneration");
    g.throughput(Throughput::Elements(steps));
    g.bench_function("extract/expl-2", |b| b.iter(|| black_box(extract(&t, &params))));
    g.finish();
}

fn discovery(c: &mut Criterion) {
    let mut g = c.benchmark_group("discovery");
    for (name, law) in laws() {
        let d = law.dim();
        let pol = EPrimePolicy::with_default_delta(d, vec![0.4; 2 * d]).unwrap();
        let e = env(&law, 3);
        g.bench_function(BenchmarkId::new("eprime", name), |b| b.iter(|| black_box(discover(&e, &pol).unwrap())));
    }
    g.finish();
}

criterion_group!(kernels, walk_steps, hypercube, regeneration, discovery);
criterion_main!(kernels);
