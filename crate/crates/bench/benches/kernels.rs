use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ksnr_core::{eig_general, fit_koopman, sample_rff, spectral_radius, Posterior, TransitionMatrixPair};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn eig(c: &mut Criterion) {
    let mut g = c.benchmark_group("eig");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for d in [50, 80, 200] {
        let a = random(&mut rng, d, d);
        g.bench_with_input(BenchmarkId::new("radius", d), &a, |b, a| b.iter(|| spectral_radius(black_box(a)).unwrap()));
        g.bench_with_input(BenchmarkId::new("vectors", d), &a, |b, a| b.iter(|| eig_general(black_box(a)).unwrap()));
    }
    g.finish();
}

fn fit(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_koopman");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (d, n) in [(50, 100), (80, 80), (200, 500)] {
        let pairs = TransitionMatrixPair::new(random(&mut rng, d, n), random(&mut rng, d, n)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(format!("{d}x{n}")), &pairs, |b, p| b.iter(|| fit_koopman(black_box(p), 1.0).unwrap()));
    }
    g.finish();
}

fn featurize(c: &mut Criterion) {
    let map = sample_rff(4, 2000, 1.5, false, 2).unwrap();
    let x = [0.1, -0.2, 0.05, 0.3];
    let mut out = vec![0.0; map.output_dim()];
    c.bench_function("featurize/4->2000", |b| b.iter(|| map.featurize_into(black_box(&x), &mut out).unwrap()));
}

fn posterior(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (dp, dz) = (10, 10);
    let z: Vec<f64> = (0..dp * dz).map(|_| rng.random_range(-0.1..0.1)).collect();
    let y: Vec<f64> = (0..dp).map(|_| rng.random_range(-1.0..1.0)).collect();
    let base = Posterior::new(dp, dz, 1.0, 1e-4).unwrap();
    c.bench_function("posterior/rank_one_d100", |b| {
        b.iter_batched(|| base.clone(), |mut p| p.update(black_box(&z), black_box(&y)).unwrap(), criterion::BatchSize::SmallInput)
    });
    let zb = random(&mut rng, dp * dz, 500) * 0.1;
    let yb = random(&mut rng, dp, 500);
    c.bench_function("posterior/batch_500_d100", |b| {
        b.iter_batched(|| base.clone(), |mut p| p.update_batch(black_box(&zb), black_box(&yb)).unwrap(), criterion::BatchSize::SmallInput)
    });
}

criterion_group!(benches, eig, fit, featurize, posterior);
criterion_main!(benches);
