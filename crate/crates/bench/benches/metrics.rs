use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ergowass::dyadic::{fg_multiscale_sum, gaussian_histogram, histogramize_points};
use ergowass::noise::{sample_fbm, FbmSpec};
use ergowass::seed::derive_seed;
use ergowass::targets::TargetLaw;
use ergowass::wasserstein::{wasserstein_1d_pow, wasserstein_exact_small, wasserstein_pow_to_gaussian};

fn sorted_normal(n: usize, seed: u64) -> Vec<f64> {
    let mut xs = TargetLaw::gaussian(0.0, 1.0).unwrap().sample(n, seed);
    xs.sort_by(f64::total_cmp);
    xs
}

fn one_dimensional(c: &mut Criterion) {
    let mut g = c.benchmark_group("w1d");
    for n in [1 << 10, 1 << 14, 1 << 16] {
        let (a, b) = (sorted_normal(n, 1), sorted_normal(n, 2));
        g.bench_with_input(BenchmarkId::new("empirical_p1", n), &n, |bch, _| {
            bch.iter(|| wasserstein_1d_pow(black_box(&a), black_box(&b), 1.0).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("gaussian_p1", n), &n, |bch, _| {
            bch.iter(|| wasserstein_pow_to_gaussian(black_box(&a), 0.0, 1.0, 1.0).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("gaussian_p1.5", n), &n, |bch, _| {
            bch.iter(|| wasserstein_pow_to_gaussian(black_box(&a), 0.0, 1.0, 1.5).unwrap())
        });
    }
    g.finish();
}

fn multiscale(c: &mut Criterion) {
    let mut g = c.benchmark_group("fg_sum");
    for dim in [1usize, 3] {
        let law = TargetLaw::gaussian_diag(vec![0.0; dim], vec![0.5; dim]).unwrap();
        let points = law.sample(1 << 14, 5);
        let depth = ergowass::dyadic::default_depth(dim);
        let target = gaussian_histogram(&vec![0.0; dim], &vec![0.5; dim], 8, depth).unwrap();
        g.bench_with_input(BenchmarkId::new("histogramize", dim), &dim, |bch, &d| {
            bch.iter(|| histogramize_points(black_box(&points), d, 8, depth).unwrap())
        });
        let h = histogramize_points(&points, dim, 8, depth).unwrap();
        g.bench_with_input(BenchmarkId::new("sum", dim), &dim, |bch, _| {
            bch.iter(|| fg_multiscale_sum(black_box(&h), black_box(&target), 1.0, None).unwrap())
        });
    }
    g.finish();
}

fn assignment(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact_small");
    for n in [16usize, 64] {
        let law = TargetLaw::gaussian_diag(vec![0.0; 2], vec![1.0; 2]).unwrap();
        let (a, b) = (law.sample(n, 7), law.sample(n, 8));
        g.bench_with_input(BenchmarkId::new("d2", n), &n, |bch, _| {
            bch.iter(|| wasserstein_exact_small(black_box(&a), black_box(&b), 2, 1.0).unwrap())
        });
    }
    g.finish();
}

fn fbm(c: &mut Criterion) {
    let mut g = c.benchmark_group("fbm");
    for steps in [1usize << 12, 1 << 16] {
        let spec = FbmSpec::new(0.3, steps as f64 / 16.0, steps).unwrap();
        g.bench_with_input(BenchmarkId::new("circulant", steps), &steps, |bch, _| {
            let mut k = 0u64;
            bch.iter(|| {
                k += 1;
                sample_fbm(black_box(&spec), 1, derive_seed(3, k)).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, one_dimensional, multiscale, assignment, fbm);
criterion_main!(benches);
