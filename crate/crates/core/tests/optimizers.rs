use ksnr_core::{cem_optimize, mppi_plan, mppi_weights, CemConfig, MppiConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quadratic(target: &[f64]) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x: &[f64]| x.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[test]
fn cem_finds_quadratic_minimizer() {
    let target = [0.5, -1.0, 2.0, 0.0, 1.5];
    let mut f = quadratic(&target);
    let r = cem_optimize(&mut f, &CemConfig::new(5, 3)).unwrap();
    for (a, b) in r.best_theta.iter().zip(&target) {
        assert!((a - b).abs() < 1e-2);
    }
    assert_eq!(r.history.len(), 50);
}

#[test]
fn cem_elite_mean_mostly_monotone() {
    let target = [1.0, -2.0, 0.5];
    let mut monotone = 0;
    for seed in 0..100 {
        let mut cfg = CemConfig::new(3, seed);
        cfg.iterations = 15;
        cfg.std_floor = 1e-6;
        let mut f = quadratic(&target);
        let r = cem_optimize(&mut f, &cfg).unwrap();
        if r.history.windows(2).all(|w| w[1].elite_mean <= w[0].elite_mean) {
            monotone += 1;
        }
    }
    assert!(monotone >= 95, "{monotone} of 100 seeds monotone");
}

#[test]
fn cem_deterministic() {
    let target = [0.3, 0.7];
    let run = || {
        let mut f = quadratic(&target);
        cem_optimize(&mut f, &CemConfig::new(2, 42)).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn cem_skips_non_finite() {
    let mut f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) };
    let r = cem_optimize(&mut f, &CemConfig::new(1, 0)).unwrap();
    assert!((r.best_theta[0] - 1.0).abs() < 1e-2);
    let mut bad = |_: &[f64]| f64::INFINITY;
    assert!(cem_optimize(&mut bad, &CemConfig::new(1, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cem_best_is_never_beaten(seed in any::<u64>()) {
        let seen = std::cell::RefCell::new(Vec::new());
        let mut f = |x: &[f64]| {
            let v = (x[0] - 0.2).powi(2) + (x[1] * x[0]).sin();
            seen.borrow_mut().push(v);
            v
        };
        let mut cfg = CemConfig::new(2, seed);
        cfg.iterations = 5;
        cfg.samples = 30;
        cfg.elite_size = 5;
        let r = cem_optimize(&mut f, &cfg).unwrap();
        let min = seen.borrow().iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(r.best_value, min);
        prop_assert!(r.history.windows(2).all(|w| w[1].best <= w[0].best));
        prop_assert!(r.history.iter().all(|h| h.std.iter().all(|s| *s >= cfg.std_floor)));
    }

    #[test]
    fn mppi_weights_normalized(costs in prop::collection::vec(-1e3f64..1e3, 1..50), temp in 1e-3f64..1e3) {
        let w = mppi_weights(&costs, temp);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
    }
}

#[test]
fn mppi_weights_high_temperature_uniform() {
    let w = mppi_weights(&[1.0, 5.0, -3.0, 0.0], 1e12);
    for x in w {
        assert!((x - 0.25).abs() < 1e-9);
    }
    let w = mppi_weights(&[2.0, f64::NAN, 1.0], 1.0);
    assert_eq!(w[1], 0.0);
}

/// Scalar integrator `x' = x + u`, one-step horizon, cost `(x − 0.7)²`:
/// the low-temperature MPPI update approaches the best sampled control,
/// which a dense grid search pins near 0.7 − x.
#[test]
fn mppi_toy_matches_grid_search() {
    let x0 = 0.1;
    let cost = |x: &f64| (x - 0.7) * (x - 0.7);
    let step = |x: &f64, u: &[f64]| x + u[0];
    let grid_best = (0..=2000).map(|i| -1.0 + i as f64 * 1e-3).min_by(|a, b| cost(&(x0 + a)).total_cmp(&cost(&(x0 + b)))).unwrap();
    let config = MppiConfig { control_std: 0.5, temperature: 0.01, horizon: 1, samples: 4000, seed: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (u, _) = mppi_plan(step, cost, &x0, &[vec![0.0]], &[(-1.0, 1.0)], &config, &mut rng).unwrap();
    assert!((u[0] - grid_best).abs() < 0.05, "{} vs {grid_best}", u[0]);
}

#[test]
fn mppi_rejects_wrong_nominal() {
    let config = MppiConfig { horizon: 3, ..MppiConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = mppi_plan(|x: &f64, u: &[f64]| x + u[0], |x: &f64| *x, &0.0, &[vec![0.0]], &[(-1.0, 1.0)], &config, &mut rng);
    assert!(r.is_err());
}
