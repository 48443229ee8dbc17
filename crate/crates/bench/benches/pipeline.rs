use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use stochsym_bench::{ou, type_c, weber_drift};
use stochsym_core::kozlov::solve_on_path;
use stochsym_core::montecarlo::{Initial, SimConfig};
use stochsym_core::weber::Branch;
use stochsym_core::*;

fn classify(c: &mut Criterion) {
    let eq = type_c();
    c.bench_function("classify_autonomous type C", |b| {
        b.iter(|| classify_autonomous(black_box(&eq.f), &eq.domain).unwrap())
    });
    let fpe = build_fp(&weber_drift());
    c.bench_function("classify_fp case I", |b| {
        b.iter(|| classify_fp(black_box(&fpe)).unwrap())
    });
}

fn weber(c: &mut Criterion) {
    let dom = Domain::new(-1.0, 3.0).unwrap();
    let mu = [0.0, 2.0 * 3f64.sqrt(), 1.0];
    c.bench_function("weber hermite branch", |b| {
        b.iter(|| generate_max_symmetry_drift(black_box(mu), Branch::default(), &dom).unwrap())
    });
    let dom = Domain::new(-1.0, 1.0).unwrap();
    c.bench_function("weber numeric branch", |b| {
        b.iter(|| {
            generate_max_symmetry_drift(
                black_box([0.0, 0.0, 1.0]),
                Branch::Initial { f0: 0.0 },
                &dom,
            )
            .unwrap()
        })
    });
}

fn fokker_planck(c: &mut Criterion) {
    let fpe = build_fp(&ou());
    let grid = Grid1d::new(-6.0, 6.0, 401).unwrap();
    let u0 = DensityGrid::gaussian(grid, 1.0, 0.5).unwrap();
    c.bench_function("fp solve OU 401 x 100", |b| {
        b.iter(|| solve_fp(&fpe, black_box(&u0), 1e-2, 1.0).unwrap())
    });
}

fn paths(c: &mut Criterion) {
    let eq = ou();
    let cfg = SimConfig::new(1000, 1e-3, 1.0, 1, Initial::Point { x0: 1.0 });
    let mut g = c.benchmark_group("paths");
    g.sample_size(10);
    g.bench_function("euler 1000 paths x 1000 steps", |b| {
        b.iter(|| simulate_ensemble(&eq, black_box(&cfg)).unwrap())
    });

    let eq = type_c();
    let class = classify_autonomous(&eq.f, &eq.domain).unwrap();
    let map = kozlov_map(class.generator.as_ref().unwrap(), &eq.domain).unwrap();
    let geq = transform_equation(&eq, &map).unwrap();
    let path = WienerPath::generate(1, 0, 1e-3, 1.0).unwrap();
    g.bench_function("kozlov type C one path", |b| {
        b.iter(|| solve_on_path(&geq, black_box(&path), 0.0).unwrap())
    });
    g.finish();
}

criterion_group!(benches, classify, weber, fokker_planck, paths);
criterion_main!(benches);
