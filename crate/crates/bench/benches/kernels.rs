use std::hint::black_box;

use blocklsi_bench::{certified_pair, model_2d, random_gaussians};
use blocklsi_core::criteria::{self, DEFAULT_TOL};
use blocklsi_core::gaussian;
use blocklsi_core::gibbs::{self, GaussianMixture};
use blocklsi_core::toeplitz::{toeplitz_spectrum_report, Band};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

fn bisection(c: &mut Criterion) {
    let mut group = c.benchmark_group("bisection");
    for max_dim in [4, 8, 16] {
        let (model, _) = certified_pair(1, max_dim);
        group.bench_with_input(BenchmarkId::new("marton", model.dim()), &model, |b, m| {
            b.iter(|| criteria::solve_rho_marton(black_box(m), DEFAULT_TOL, None).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("evaluate", model.dim()), &model, |b, m| {
            b.iter(|| criteria::evaluate(black_box(m), DEFAULT_TOL, None).unwrap())
        });
    }
    group.finish();
}

fn divergences(c: &mut Criterion) {
    let mut group = c.benchmark_group("gaussian");
    for n in [2, 8, 32] {
        let (p, q) = random_gaussians(2, n);
        group
            .bench_with_input(BenchmarkId::new("kl", n), &(&p, &q), |b, (p, q)| b.iter(|| gaussian::kl(p, q).unwrap()));
        group
            .bench_with_input(BenchmarkId::new("w2", n), &(&p, &q), |b, (p, q)| b.iter(|| gaussian::w2(p, q).unwrap()));
    }
    let (model, p) = certified_pair(3, 8);
    let q = model.target().unwrap();
    group.bench_function("avg_conditional_kl", |b| {
        b.iter(|| gaussian::avg_conditional_kl(black_box(&p), &q, model.partition(), 0).unwrap())
    });
    group.finish();
}

fn toeplitz(c: &mut Criterion) {
    let band = Band::parse("1:1,2:-1").unwrap();
    let mut group = c.benchmark_group("toeplitz");
    group.sample_size(10);
    for m in [64, 512] {
        group.bench_with_input(BenchmarkId::new("spectrum_report", m), &m, |b, &m| {
            b.iter(|| toeplitz_spectrum_report(m, 3.0, &band).unwrap())
        });
    }
    group.finish();
}

fn mixture_mc(c: &mut Criterion) {
    let model = model_2d();
    let q = model.target().unwrap();
    let p0 = q.shifted(&DVector::from_vec(vec![2.0, 0.0])).unwrap();
    let mut law = GaussianMixture::single(p0);
    for _ in 0..4 {
        law = gibbs::apply_weighted_gibbs(&law, &model, &[1.0, 1.0]).unwrap().merge_duplicates();
    }
    let mut group = c.benchmark_group("mixture");
    group.sample_size(20);
    group.bench_function("kl_mixture_mc_20k", |b| b.iter(|| gibbs::kl_mixture_mc(&law, &q, 20_000, 7).unwrap()));
    group.bench_function("apply_weighted_gibbs", |b| {
        b.iter(|| gibbs::apply_weighted_gibbs(black_box(&law), &model, &[1.0, 1.0]).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bisection, divergences, toeplitz, mixture_mc);
criterion_main!(benches);
