//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs every criterion at its stated tolerance and budget (desk profile for
//! the experiments). Exits non-zero on a failure only when
//! `ACCEPTANCE_STRICT=1`; otherwise failures are reported and the process
//! exits 0 so the rest of the workspace suite still runs. Set
//! `ACCEPTANCE_ONLY=2,6` to run a subset.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ksnr_cli::config::{ImitationCost, ResolvedConfig};
use ksnr_cli::experiments::{run_cartpole_stable, run_kslc3_cartpole, run_limit_cycle_imitate};
use ksnr_cli::{run_experiment, Experiment, ExperimentConfig, Scale};
use ksnr_core::kslc3::info_gain_log_bound;
use ksnr_core::{
    beta_radius, eig_general, fit_koopman, holder_constants, info_gain, kron_feature, koopman_from_model, pretrain_cartpole_policies, rollout, sample_rff, EnvKind, Posterior,
    RffPolicy, StepCostSpec, TransitionMatrixPair,
};
use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn desk(seed: u64) -> ExperimentConfig {
    ExperimentConfig { scale: Scale::Desk, seed, ..ExperimentConfig::default() }
}

fn resolve(cfg: ExperimentConfig) -> ResolvedConfig {
    cfg.resolve().expect("valid config")
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn ridge_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let g = x * x.transpose() + DMatrix::identity(x.nrows(), x.nrows()) * ridge;
    y * x.transpose() * g.try_inverse().expect("SPD")
}

fn oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let (mut fit_err, mut post_err, mut kron_err, mut eig_err) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for k in 0..100 {
        let d = 3 + k % 8;
        let n = 2 * d + k % 30;
        let x = random(&mut rng, d, n);
        let y = random(&mut rng, d, n);
        let a = fit_koopman(&TransitionMatrixPair::new(x.clone(), y.clone()).unwrap(), 1.0).unwrap();
        let o = ridge_oracle(&x, &y, 1.0);
        fit_err = fit_err.max((a - &o).norm() / o.norm().max(1.0));

        let (dp, dz) = (2 + k % 3, 1 + k % 3);
        let z = random(&mut rng, dp * dz, n);
        let yy = random(&mut rng, dp, n);
        let mut post = Posterior::new(dp, dz, 1.0, 1e-4).unwrap();
        for j in 0..n {
            let zc: Vec<f64> = z.column(j).iter().copied().collect();
            let yc: Vec<f64> = yy.column(j).iter().copied().collect();
            post.update(&zc, &yc).unwrap();
        }
        let o = ridge_oracle(&z, &yy, 1.0);
        post_err = post_err.max((post.mean() - &o).norm() / o.norm().max(1.0));

        let mp = random(&mut rng, dp, dp * dz);
        let zeta: Vec<f64> = (0..dz).map(|_| rng.random_range(-1.0..1.0)).collect();
        let phi: Vec<f64> = (0..dp).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = koopman_from_model(&mp, &zeta).unwrap() * DVector::from_vec(phi.clone());
        let rhs = &mp * DVector::from_vec(kron_feature(&phi, &zeta));
        kron_err = kron_err.max((lhs - rhs).norm());

        let m = random(&mut rng, d, d);
        let eig = eig_general(&m).unwrap();
        let mc = m.map(|v| Complex::new(v, 0.0));
        for (l, v) in eig.eigenvalues.iter().zip(&eig.right_eigenvectors) {
            eig_err = eig_err.max((&mc * v - v * *l).norm() / m.norm());
        }
    }
    let elapsed = start.elapsed();
    let pass = fit_err <= 1e-8 && post_err <= 1e-8 && kron_err <= 1e-12 && eig_err <= 1e-8 && elapsed < Duration::from_secs(10);
    Outcome {
        pass,
        detail: format!(
            "fit {fit_err:.1e} (<=1e-8), posterior {post_err:.1e} (<=1e-8), kron {kron_err:.1e} (<=1e-12), eig residual {eig_err:.1e}*|A| (<=1e-8), {:.1}s (<10s)",
            elapsed.as_secs_f64()
        ),
    }
}

fn limit_cycle() -> Outcome {
    let start = Instant::now();
    let mut errors = Vec::new();
    for seed in [100, 200, 300, 400, 500] {
        let out = run_limit_cycle_imitate(&resolve(desk(seed))).expect("limit-cycle run");
        errors.push(out.median_tail_error);
    }
    let elapsed = start.elapsed();
    let converged = errors.iter().filter(|e| **e <= 0.1).count();

    let mut hs = desk(100);
    hs.limit_cycle.imitation = ImitationCost::HilbertSchmidt;
    let hs_error = run_limit_cycle_imitate(&resolve(hs)).expect("HS imitation run").median_tail_error;

    let pass = converged >= 4 && elapsed <= Duration::from_secs(300);
    let errs: Vec<String> = errors.iter().map(|e| format!("{e:.3}")).collect();
    Outcome {
        pass,
        detail: format!(
            "median |r-1| per seed [{}], {converged}/5 <= 0.1 (need 4), {:.0}s (<=300s); HS variant median |r-1| = {hs_error:.3} ({})",
            errs.join(", "),
            elapsed.as_secs_f64(),
            if hs_error > 0.1 { "did not converge to the circle" } else { "converged" }
        ),
    }
}

fn cartpole() -> Outcome {
    let start = Instant::now();
    let mut ok = 0;
    let mut rows = Vec::new();
    for seed in [100, 200, 300, 400] {
        let reg = run_cartpole_stable(&resolve(desk(seed))).expect("regularized run");
        let mut free = desk(seed);
        free.cartpole_stable.spectrum_weight = 0.0;
        let free = run_cartpole_stable(&resolve(free)).expect("unregularized run");
        let reg_ok = reg.spectral_radius <= 1.01 && reg.velocity_sign_changes >= 3;
        let free_ok = free.spectral_radius >= 1.0 && free.final_position.abs() > 5.0;
        ok += usize::from(reg_ok && free_ok);
        rows.push(format!(
            "seed {seed}: reg rho {:.4} flips {} | free rho {:.4} |p| {:.2}",
            reg.spectral_radius,
            reg.velocity_sign_changes,
            free.spectral_radius,
            free.final_position.abs()
        ));
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: ok >= 3 && elapsed <= Duration::from_secs(600),
        detail: format!("{ok}/4 seeds show the gap (need 3), {:.0}s (<=600s); {}", elapsed.as_secs_f64(), rows.join("; ")),
    }
}

fn kslc3() -> Outcome {
    let start = Instant::now();
    let base = resolve(desk(100));
    let pre = pretrain_cartpole_policies(&base.pretrain).expect("pretraining");
    let mut decreased = 0;
    let (mut gap_first, mut gap_last) = (0.0, 0.0);
    let mut rows = Vec::new();
    let mut episodes = 0;
    for seed in [100, 200, 300, 400] {
        let out = run_kslc3_cartpole(&resolve(desk(seed)), &pre).expect("KS-LC3 run");
        episodes = out.episodes.len();
        let (s0, s1) = out.measured_spectrum_first_last(4);
        let (g0, g1) = out.gap_first_last(4);
        decreased += usize::from(s1 < s0);
        gap_first += g0 / 4.0;
        gap_last += g1 / 4.0;
        rows.push(format!("seed {seed}: spectrum {s0:.3} -> {s1:.3}, gap {g0:.3} -> {g1:.3}"));
    }
    let elapsed = start.elapsed();
    let gap_ok = gap_last <= 0.5 * gap_first;
    Outcome {
        pass: decreased >= 3 && gap_ok && episodes <= 30 && elapsed <= Duration::from_secs(900),
        detail: format!(
            "spectrum decreased in {decreased}/4 seeds (need 3); mean gap {gap_first:.3} -> {gap_last:.3} (need <= 50%); {episodes} episodes; {:.0}s (<=900s); {}",
            elapsed.as_secs_f64(),
            rows.join("; ")
        ),
    }
}

fn theory() -> Outcome {
    let start = Instant::now();
    // Transitions from real cart-pole rollouts, lifted by φ ⊗ ζ.
    let phi = sample_rff(4, 8, 2.0, true, 7).unwrap();
    let zeta_map = sample_rff(1, 5, 5.0, false, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let policy_map = Arc::new(sample_rff(4, 20, 2.0, false, 10).unwrap());
    let (d_phi, d_zeta, lambda) = (phi.output_dim(), zeta_map.output_dim(), 1.0);
    let mut post = Posterior::new(d_phi, d_zeta, lambda, 1e-4).unwrap();
    let mut z_cols = Vec::new();
    let mut gains = vec![info_gain(&post)];
    let mut bound_ok = true;
    for ep in 0..10 {
        let theta: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zeta = zeta_map.featurize(&[ep as f64 * 0.1]).unwrap();
        let policy = RffPolicy::from_params(policy_map.clone(), 1, &theta, vec![(-1.0, 1.0)]).unwrap();
        let traj = rollout(EnvKind::Cartpole.sample_init(&mut rng), &policy, 100, &StepCostSpec::None).unwrap();
        for w in traj.observations.windows(2) {
            let z = kron_feature(&phi.featurize(&w[0]).unwrap(), &zeta);
            post.update(&z, &phi.featurize(&w[1]).unwrap()).unwrap();
            z_cols.push(z);
        }
        let g = info_gain(&post);
        bound_ok &= g <= 4.0 * info_gain_log_bound(d_phi * d_zeta, post.pairs(), post.feature_bound(), lambda);
        gains.push(g);
    }
    let monotone = gains.windows(2).all(|w| w[1] >= w[0]);

    let dim = d_phi * d_zeta;
    let z = DMatrix::from_fn(dim, z_cols.len(), |i, j| z_cols[j][i]);
    let dense = (&z * z.transpose() + DMatrix::identity(dim, dim) * lambda).cholesky().expect("SPD");
    let dense_logdet: f64 = 2.0 * dense.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ratio = dense_logdet - dim as f64 * lambda.ln();
    let t = 11;
    let beta = beta_radius(t, 1e-4, d_phi, post.logdet_ratio()).unwrap();
    let beta_oracle = 20.0 * 1e-4 * (d_phi as f64 + (t as f64).ln() + ratio);
    let beta_err = (beta - beta_oracle).abs() / beta_oracle;

    let h = holder_constants(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]))).unwrap();
    let holder_ok = (h.kappa - 1.0).abs() < 1e-12 && h.jordan_block_order_m == Some(1) && (h.l - 16.0).abs() < 1e-9;
    let elapsed = start.elapsed();
    Outcome {
        pass: monotone && bound_ok && beta_err <= 1e-8 && holder_ok && elapsed < Duration::from_secs(10),
        detail: format!(
            "info_gain monotone {monotone}, within 4x log bound {bound_ok}; beta rel err {beta_err:.1e} (<=1e-8); holder L = {} (16); {:.1}s (<10s)",
            h.l,
            elapsed.as_secs_f64()
        ),
    }
}

/// Budgets small enough to run every experiment twice in seconds.
fn tiny(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig { scale: Scale::Paper, seed, ..ExperimentConfig::default() };
    for cem in [&mut c.limit_cycle.cem, &mut c.cartpole_stable.cem, &mut c.kslc3.cem, &mut c.kslc3.baseline_cem] {
        cem.samples = 8;
        cem.elite_size = 2;
        cem.iterations = 2;
    }
    c.limit_cycle.target_iterations = 3;
    c.kslc3.episodes = 2;
    c.kslc3.horizon = 60;
    c.kslc3.zeta_rff_dim = 4;
    c.pretrain.iterations = 1;
    c.pretrain.mppi.samples = 8;
    c.pretrain.mppi.horizon = 10;
    c.pretrain.follow_up_horizon = 12;
    c.pretrain.position_steps = 10;
    c.pretrain.velocity_steps = 10;
    c.pretrain.policy_rff_dim = 50;
    c.pretrain.target_horizon = 50;
    c
}

fn determinism() -> Outcome {
    let experiments = [
        Experiment::LimitCycleTargetTrain,
        Experiment::LimitCycleImitate,
        Experiment::CartpoleStable,
        Experiment::PretrainCartpole,
        Experiment::Kslc3Cartpole,
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for exp in experiments {
        let run = || run_experiment(&resolve(tiny(7)), exp).expect("tiny run").artifacts;
        let (a, b) = (run(), run());
        files += a.files.iter().filter(|(n, _)| n.ends_with(".csv")).count();
        if a.files.len() != b.files.len() {
            mismatches.push(format!("{}: file sets differ", exp.name()));
            continue;
        }
        for ((na, ca), (nb, cb)) in a.files.iter().zip(&b.files) {
            if na != nb || (na.ends_with(".csv") && ca != cb) {
                mismatches.push(format!("{}/{na}", exp.name()));
            }
        }
    }
    Outcome {
        pass: mismatches.is_empty() && files > 0,
        detail: if mismatches.is_empty() { format!("{files} CSV files byte-identical across reruns of 5 experiments") } else { format!("differing: {}", mismatches.join(", ")) },
    }
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [(usize, &str, fn() -> Outcome); 6] = [
        (1, "oracle equivalences", oracles),
        (2, "limit-cycle imitation", limit_cycle),
        (3, "cartpole stable loop", cartpole),
        (4, "KS-LC3 cartpole", kslc3),
        (5, "theory diagnostics", theory),
        (6, "determinism", determinism),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let out = run();
        failed += usize::from(!out.pass);
        println!("criterion {id} ({name}): {}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
    }
    if failed > 0 && strict {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
