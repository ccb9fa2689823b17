use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dna_accel::extrapolate::{Extrapolator, ExtrapolatorConfig, IterateWindow, Method};
use dna_accel::linalg::{
    gaussian_vector, make_conditioned_matrix, random_spd, seeded_rng, SyntheticSpec,
};
use dna_accel::oracle::build_corpus;
use dna_accel::parallel;
use dna_accel::problems::{LeastSquares, Problem, Quadratic};
use dna_accel::schemes::{gd_run, run_scheme, Scheme, SchemeConfig};
use dna_accel::Vector;

fn single_extrapolation(c: &mut Criterion) {
    let mut group = c.benchmark_group("extrapolate");
    for n in [50usize, 200] {
        let mut rng = seeded_rng(n as u64);
        let q = Quadratic::new(random_spd(&mut rng, n, 1e3), gaussian_vector(&mut rng, n)).unwrap();
        let alpha = 1.0 / q.lipschitz();
        let xs = gd_run(&q, &gaussian_vector(&mut rng, n), 10, alpha).unwrap();
        let w = IterateWindow::from_sequence(&xs, &[alpha; 10]).unwrap();
        for m in Method::ALL {
            let cfg = ExtrapolatorConfig::new(m);
            group.bench_with_input(BenchmarkId::new(m.as_str(), n), &w, |b, w| {
                b.iter(|| cfg.extrapolate(black_box(w), q.grad_at_origin()).unwrap())
            });
        }
    }
    group.finish();
}

fn oracle_corpus(c: &mut Criterion) {
    let corpus = build_corpus(100, 2024, 1e10);
    let check = |case: &dna_accel::oracle::QuadraticCase| {
        case.closed_form_values().map(|v| v.f_r).unwrap_or(f64::NAN)
    };
    let mut group = c.benchmark_group("oracle_corpus");
    group.bench_function("parallel", |b| {
        b.iter(|| parallel::map(black_box(&corpus), check))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| parallel::map_sequential(black_box(&corpus), check))
    });
    group.finish();
}

fn multi_seed_runs(c: &mut Criterion) {
    let problems: Vec<LeastSquares> = (0..8u64)
        .map(|seed| {
            let a = make_conditioned_matrix(
                &SyntheticSpec::with_condition(200, 100, 1e4, seed).unwrap(),
            )
            .unwrap();
            let mut rng = seeded_rng(seed);
            LeastSquares::new(a, gaussian_vector(&mut rng, 200)).unwrap()
        })
        .collect();
    let cfg = SchemeConfig::new(Scheme::Online1, 3, 100).with_f_star(0.0);
    let ex = ExtrapolatorConfig::new(Method::Dna1);
    let run = |p: &LeastSquares| {
        run_scheme(p, &Vector::zeros(p.dim()), &cfg, &ex)
            .unwrap()
            .final_gap()
    };
    let mut group = c.benchmark_group("online1_dna1_8_seeds");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| parallel::map(black_box(&problems), run))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| parallel::map_sequential(black_box(&problems), run))
    });
    group.finish();
}

criterion_group!(
    benches,
    single_extrapolation,
    oracle_corpus,
    multi_seed_runs
);
criterion_main!(benches);
