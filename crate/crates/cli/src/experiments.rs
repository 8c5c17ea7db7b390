//! Experiment drivers. Each returns a typed outcome plus the artifacts that
//! the CLI writes to disk.

use std::sync::Arc;

use anyhow::{anyhow, Context};
use ksnr_core::cem::{evaluate_ksnr, InitStates, KsnrEvaluation, KsnrObjective, PolicyTemplate};
use ksnr_core::envs::write_trajectories_csv;
use ksnr_core::features::RFF_VARIANT;
use ksnr_core::koopman::write_matrix_csv;
use ksnr_core::kslc3::{empirical_regret, run_kslc3, write_episodes_csv, Episode, KsLc3Spec, Posterior};
use ksnr_core::mppi::{pretrain_cartpole_policies, Pretrained};
use ksnr_core::{
    assemble_pairs, cem_optimize, fit_koopman, rollout, sample_rff, spectral, CemResult, EnvKind, EnvState, FeatureMap,
    KoopmanEstimate, KsnrObjectiveSpec, LimitCycleTruth, SpectrumCostSpec, SpectrumTerm, StepCostSpec,
    Trajectory,
};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Experiment, ImitationCost, ResolvedConfig};
use crate::output::{line_plot, metrics_csv, Artifacts, Series};

/// Independent seed for a named sub-stream of a run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

mod stream {
    pub const PHI: u64 = 1;
    pub const POLICY: u64 = 2;
    pub const TARGET_DATA: u64 = 3;
    pub const CEM: u64 = 4;
    pub const INIT: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const ZETA: u64 = 7;
    pub const EPISODES: u64 = 8;
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> ksnr_core::Result<()>) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn init_states(kind: EnvKind, n: usize, seed: u64) -> Vec<EnvState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| kind.sample_init(&mut rng)).collect()
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    version: &'a str,
    experiment: &'a str,
    seed: u64,
    rff_variant: &'a str,
    config: &'a ResolvedConfig,
}

fn config_json(cfg: &ResolvedConfig, exp: Experiment) -> anyhow::Result<String> {
    let meta = RunMetadata { version: ksnr_core::VERSION, experiment: exp.name(), seed: cfg.seed, rff_variant: RFF_VARIANT, config: cfg };
    Ok(serde_json::to_string_pretty(&meta)? + "\n")
}

/// Every file a run produces plus its headline metrics.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<(String, f64)>,
    pub artifacts: Artifacts,
}

impl RunOutput {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// Dispatch on the experiment name.
pub fn run_experiment(cfg: &ResolvedConfig, exp: Experiment) -> anyhow::Result<RunOutput> {
    let mut out = match exp {
        Experiment::LimitCycleTargetTrain => run_target_train(cfg)?.output,
        Experiment::LimitCycleImitate => run_limit_cycle_imitate(cfg)?.output,
        Experiment::CartpoleStable => run_cartpole_stable(cfg)?.output,
        Experiment::PretrainCartpole => run_pretrain(cfg)?.output,
        Experiment::Kslc3Cartpole => {
            let pre = pretrain_cartpole_policies(&cfg.pretrain)?;
            run_kslc3_cartpole(cfg, &pre)?.output
        }
    };
    out.artifacts.files.insert(0, ("config.json".into(), config_json(cfg, exp)?.into_bytes()));
    out.artifacts.add("metrics.csv", metrics_csv(&out.metrics));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Limit cycle

pub struct TargetOutcome {
    pub phi: Arc<FeatureMap>,
    pub target: KoopmanEstimate,
    pub trajectories: Vec<Trajectory>,
    pub output: RunOutput,
}

fn limit_cycle_phi(cfg: &ResolvedConfig) -> anyhow::Result<Arc<FeatureMap>> {
    let lc = &cfg.limit_cycle;
    Ok(Arc::new(sample_rff(3, lc.phi_rff_dim, lc.phi_bandwidth, false, derive_seed(cfg.seed, stream::PHI))?))
}

/// Fit `A*` on ground-truth limit-cycle rollouts from random initial states.
pub fn train_target(cfg: &ResolvedConfig, phi: &FeatureMap, iterations: usize) -> anyhow::Result<(KoopmanEstimate, Vec<Trajectory>)> {
    let lc = &cfg.limit_cycle;
    let trajs = init_states(EnvKind::LimitCycle, iterations, derive_seed(cfg.seed, stream::TARGET_DATA))
        .into_iter()
        .map(|x0| rollout(x0, &LimitCycleTruth, lc.target_horizon, &StepCostSpec::None))
        .collect::<ksnr_core::Result<Vec<_>>>()?;
    let a = fit_koopman(&assemble_pairs(&trajs, phi)?, lc.ridge)?;
    Ok((KoopmanEstimate::new(a)?, trajs))
}

pub fn run_target_train(cfg: &ResolvedConfig) -> anyhow::Result<TargetOutcome> {
    let phi = limit_cycle_phi(cfg)?;
    let (target, trajectories) = train_target(cfg, &phi, cfg.limit_cycle.target_iterations)?;
    let mut artifacts = Artifacts::default();
    artifacts.add("a_star.csv", csv_bytes(|w| target.write_csv(w))?);
    artifacts.add("phi.json", serde_json::to_string_pretty(&*phi)? + "\n");
    let shown = &trajectories[..trajectories.len().min(10)];
    artifacts.add("trajectories.csv", csv_bytes(|w| write_trajectories_csv(shown, true, w))?);
    artifacts.add("trajectories.svg", xy_plot("ground-truth limit cycle", shown));
    let eigs = Series::new("eigenvalues", target.eig.eigenvalues.iter().map(|l| (l.re, l.im)).collect());
    artifacts.add("eigenvalues.svg", line_plot("eigenvalues of A*", "Re", "Im", &[eigs]));
    let metrics = vec![
        ("spectral_radius".into(), target.spectral_radius()),
        ("transition_pairs".into(), (trajectories.len() * cfg.limit_cycle.target_horizon) as f64),
        ("spectrum_cost".into(), 0.0),
        ("cumulative_cost".into(), 0.0),
    ];
    Ok(TargetOutcome { phi, target, trajectories, output: RunOutput { metrics, artifacts } })
}

fn xy_plot(title: &str, trajs: &[Trajectory]) -> String {
    let series: Vec<Series> = trajs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let pts = t
                .states
                .iter()
                .map(|s| match *s {
                    EnvState::LimitCycle { r, theta } => (r * theta.cos(), r * theta.sin()),
                    EnvState::Cartpole { p, v, .. } => (p, v),
                })
                .collect();
            Series::new(format!("rollout {i}"), pts)
        })
        .collect();
    line_plot(title, "x", "y", &series)
}

pub struct LimitCycleOutcome {
    pub target: KoopmanEstimate,
    pub cem: CemResult,
    pub eval_trajectories: Vec<Trajectory>,
    pub final_eval: KsnrEvaluation,
    /// Median `|r − 1|` over the scored tail of every evaluation rollout.
    pub median_tail_error: f64,
    pub output: RunOutput,
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn run_limit_cycle_imitate(cfg: &ResolvedConfig) -> anyhow::Result<LimitCycleOutcome> {
    let lc = &cfg.limit_cycle;
    let phi = limit_cycle_phi(cfg)?;
    let (target, _) = train_target(cfg, &phi, lc.target_iterations)?;
    let term = match lc.imitation {
        ImitationCost::TopMode => SpectrumTerm::ModeL1 { target: spectral::top_mode_of(&target.eig).context("top mode of A*")? },
        ImitationCost::HilbertSchmidt => SpectrumTerm::HsImitation { target: target.matrix.clone() },
    };
    let policy_map = Arc::new(sample_rff(3, lc.policy_rff_dim, lc.policy_bandwidth, false, derive_seed(cfg.seed, stream::POLICY))?);
    let spec = KsnrObjectiveSpec {
        env_kind: EnvKind::LimitCycle,
        policy: PolicyTemplate::Rff { map: policy_map, action_dim: 2, clip: vec![(-lc.action_bound, lc.action_bound); 2] },
        phi,
        spectrum: SpectrumCostSpec::new().with(lc.spectrum_weight, term),
        step_cost: StepCostSpec::None,
        horizon: lc.horizon,
        ridge: lc.ridge,
        init_states: InitStates::PerIteration { count: 1, seed: derive_seed(cfg.seed, stream::INIT) },
    };
    let mut objective = KsnrObjective::new(&spec)?;
    let cem = cem_optimize(&mut objective, &lc.cem.build(spec.policy.param_dim(), derive_seed(cfg.seed, stream::CEM)))?;

    let eval_states = init_states(EnvKind::LimitCycle, lc.eval_rollouts, derive_seed(cfg.seed, stream::EVAL));
    let eval_spec = KsnrObjectiveSpec { horizon: lc.eval_horizon, ..spec.clone() };
    let final_eval = evaluate_ksnr(&eval_spec, lc.selection.pick(&cem), &eval_states)?;
    let tail: Vec<f64> = final_eval
        .trajectories
        .iter()
        .flat_map(|t| t.states[t.states.len() - lc.eval_tail..].iter())
        .map(|s| match *s {
            EnvState::LimitCycle { r, .. } => (r - 1.0).abs(),
            _ => unreachable!(),
        })
        .collect();
    let median_tail_error = median(tail);

    let mut artifacts = Artifacts::default();
    artifacts.add("trajectories.csv", csv_bytes(|w| write_trajectories_csv(&final_eval.trajectories, true, w))?);
    artifacts.add("cem_history.csv", csv_bytes(|w| cem.write_history_csv(w))?);
    artifacts.add("a_star.csv", csv_bytes(|w| target.write_csv(w))?);
    artifacts.add("trajectories.svg", xy_plot("final policy rollouts (x-y)", &final_eval.trajectories));
    let radii: Vec<Series> = final_eval
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| Series::indexed(format!("r, rollout {i}"), t.states.iter().map(|s| s.as_vec()[0])))
        .collect();
    artifacts.add("radius.svg", line_plot("radius of final policy rollouts", "step", "r", &radii));
    artifacts.add("learning_curve.svg", learning_curve(&cem));
    let metrics = vec![
        ("spectrum_cost".into(), final_eval.spectrum_cost),
        ("cumulative_cost".into(), final_eval.cumulative_cost),
        ("spectral_radius".into(), spectral::spectral_radius(&final_eval.koopman)?),
        ("target_spectral_radius".into(), target.spectral_radius()),
        ("median_tail_radius_error".into(), median_tail_error),
        ("cem_best_objective".into(), cem.best_value),
    ];
    Ok(LimitCycleOutcome { target, cem, eval_trajectories: final_eval.trajectories.clone(), final_eval, median_tail_error, output: RunOutput { metrics, artifacts } })
}

fn learning_curve(cem: &CemResult) -> String {
    let best = Series::new("best", cem.history.iter().map(|h| (h.iteration as f64, h.best)).collect());
    let elite = Series::new("elite mean", cem.history.iter().map(|h| (h.iteration as f64, h.elite_mean)).collect());
    line_plot("CEM learning curve", "iteration", "objective", &[best, elite])
}

// ---------------------------------------------------------------------------
// Cart-pole stable loops

pub struct CartpoleOutcome {
    pub cem: CemResult,
    pub eval: KsnrEvaluation,
    pub spectral_radius: f64,
    pub velocity_sign_changes: usize,
    pub final_position: f64,
    pub output: RunOutput,
}

/// Sign flips of a sequence, ignoring exact zeros.
pub fn sign_changes(values: impl IntoIterator<Item = f64>) -> usize {
    let mut last = 0.0_f64;
    let mut n = 0;
    for v in values {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && v.signum() != last.signum() {
            n += 1;
        }
        last = v;
    }
    n
}

pub fn cartpole_phi(rff_dim: usize, bandwidth: f64, seed: u64) -> anyhow::Result<Arc<FeatureMap>> {
    Ok(Arc::new(sample_rff(4, rff_dim, bandwidth, true, seed)?))
}

pub fn run_cartpole_stable(cfg: &ResolvedConfig) -> anyhow::Result<CartpoleOutcome> {
    let cp = &cfg.cartpole_stable;
    let phi = cartpole_phi(cp.phi_rff_dim, cp.phi_bandwidth, derive_seed(cfg.seed, stream::PHI))?;
    let policy_map = Arc::new(sample_rff(4, cp.policy_rff_dim, cp.policy_bandwidth, false, derive_seed(cfg.seed, stream::POLICY))?);
    let spec = KsnrObjectiveSpec {
        env_kind: EnvKind::Cartpole,
        policy: PolicyTemplate::Rff { map: policy_map, action_dim: 1, clip: vec![(-1.0, 1.0)] },
        phi,
        spectrum: SpectrumCostSpec::new().with(cp.spectrum_weight, SpectrumTerm::StabilityRadius),
        step_cost: StepCostSpec::NegVelocityReward { scale: cp.velocity_reward_scale, fall_penalty: cp.fall_penalty },
        horizon: cp.horizon,
        ridge: cp.ridge,
        init_states: InitStates::PerIteration { count: 1, seed: derive_seed(cfg.seed, stream::INIT) },
    };
    let mut objective = KsnrObjective::new(&spec)?;
    let cem = cem_optimize(&mut objective, &cp.cem.build(spec.policy.param_dim(), derive_seed(cfg.seed, stream::CEM)))?;

    let eval_spec = KsnrObjectiveSpec { horizon: cp.eval_horizon, ..spec.clone() };
    let eval_states = init_states(EnvKind::Cartpole, 1, derive_seed(cfg.seed, stream::EVAL));
    let eval = evaluate_ksnr(&eval_spec, cp.selection.pick(&cem), &eval_states)?;
    let traj = &eval.trajectories[0];
    let spectral_radius = spectral::spectral_radius(&eval.koopman)?;
    let velocity_sign_changes = sign_changes(traj.observations.iter().map(|o| o[1]));
    let final_position = traj.observations.last().expect("non-empty")[0];

    let mut artifacts = Artifacts::default();
    artifacts.add("trajectories.csv", csv_bytes(|w| write_trajectories_csv(&eval.trajectories, true, w))?);
    artifacts.add("cem_history.csv", csv_bytes(|w| cem.write_history_csv(w))?);
    artifacts.add("koopman.csv", csv_bytes(|w| write_matrix_csv(&eval.koopman, w))?);
    let v = Series::indexed("cart velocity", traj.observations.iter().map(|o| o[1]));
    let p = Series::indexed("cart position", traj.observations.iter().map(|o| o[0]));
    artifacts.add("trajectories.svg", line_plot("final policy rollout", "step", "value", &[v, p]));
    artifacts.add("learning_curve.svg", learning_curve(&cem));
    let metrics = vec![
        ("spectrum_cost".into(), eval.spectrum_cost),
        ("cumulative_cost".into(), eval.cumulative_cost),
        ("cumulative_reward".into(), -eval.cumulative_cost),
        ("spectral_radius".into(), spectral_radius),
        ("velocity_sign_changes".into(), velocity_sign_changes as f64),
        ("final_position".into(), final_position),
        ("cem_best_objective".into(), cem.best_value),
    ];
    Ok(CartpoleOutcome { cem, spectral_radius, velocity_sign_changes, final_position, eval, output: RunOutput { metrics, artifacts } })
}

// ---------------------------------------------------------------------------
// Pretraining

pub struct PretrainOutcome {
    pub pretrained: Pretrained,
    pub upright_fraction: f64,
    pub mean_velocity: [f64; 2],
    pub output: RunOutput,
}

/// Diagnostics of pretrained base policies from a fixed initial state set.
pub fn pretrain_diagnostics(pre: &Pretrained, seed: u64) -> anyhow::Result<(Vec<Trajectory>, f64, [f64; 2])> {
    let x0 = init_states(EnvKind::Cartpole, 1, derive_seed(seed, stream::EVAL))[0];
    let trajs = pre
        .policies
        .iter()
        .map(|p| rollout(x0, p, 500, &StepCostSpec::None))
        .collect::<ksnr_core::Result<Vec<_>>>()?;
    let upright = trajs[0].observations[..500].iter().filter(|o| o[2].cos() > 0.0).count() as f64 / 500.0;
    let mean_v = |t: &Trajectory| t.observations[100..500].iter().map(|o| o[1]).sum::<f64>() / 400.0;
    Ok((trajs.clone(), upright, [mean_v(&trajs[1]), mean_v(&trajs[2])]))
}

pub fn run_pretrain(cfg: &ResolvedConfig) -> anyhow::Result<PretrainOutcome> {
    let pre = pretrain_cartpole_policies(&cfg.pretrain)?;
    let (trajs, upright_fraction, mean_velocity) = pretrain_diagnostics(&pre, cfg.seed)?;
    let mut artifacts = Artifacts::default();
    artifacts.add("trajectories.csv", csv_bytes(|w| write_trajectories_csv(&trajs, true, w))?);
    artifacts.add("demonstrations.csv", csv_bytes(|w| write_trajectories_csv(&pre.demonstrations, true, w))?);
    artifacts.add("a_star.csv", csv_bytes(|w| pre.a_star.write_csv(w))?);
    artifacts.add("policies.json", serde_json::to_string(&pre.policies)? + "\n");
    artifacts.add("phi.json", serde_json::to_string_pretty(&*pre.phi)? + "\n");
    let names = ["position oscillation", "velocity -", "velocity +"];
    let series: Vec<Series> = trajs
        .iter()
        .zip(names)
        .map(|(t, n)| Series::indexed(n, t.observations.iter().map(|o| o[1])))
        .collect();
    artifacts.add("trajectories.svg", line_plot("pretrained policies: cart velocity", "step", "v", &series));
    let metrics = vec![
        ("a_star_spectral_radius".into(), pre.a_star.spectral_radius()),
        ("policy1_upright_fraction".into(), upright_fraction),
        ("policy2_mean_velocity".into(), mean_velocity[0]),
        ("policy3_mean_velocity".into(), mean_velocity[1]),
        ("spectrum_cost".into(), 0.0),
        ("cumulative_cost".into(), 0.0),
    ];
    Ok(PretrainOutcome { pretrained: pre, upright_fraction, mean_velocity, output: RunOutput { metrics, artifacts } })
}

// ---------------------------------------------------------------------------
// Online learning

pub struct Kslc3Outcome {
    pub episodes: Vec<Episode>,
    /// Realized objective of the CEM-on-true-environment solution.
    pub baseline: f64,
    pub baseline_theta: Vec<f64>,
    pub regret: Vec<f64>,
    pub posterior: Posterior,
    pub output: RunOutput,
}

impl Kslc3Outcome {
    fn window_mean(&self, f: impl Fn(&Episode) -> f64, first: bool, k: usize) -> f64 {
        let n = self.episodes.len();
        let k = k.min(n);
        let slice = if first { &self.episodes[..k] } else { &self.episodes[n - k..] };
        slice.iter().map(f).sum::<f64>() / k as f64
    }

    pub fn measured_spectrum_first_last(&self, k: usize) -> (f64, f64) {
        let f = |e: &Episode| e.record.spectrum_cost_measured;
        (self.window_mean(f, true, k), self.window_mean(f, false, k))
    }

    /// Mean gap `realized − baseline` over the first and last `k` episodes.
    pub fn gap_first_last(&self, k: usize) -> (f64, f64) {
        let f = |e: &Episode| e.record.realized_objective() - self.baseline;
        (self.window_mean(f, true, k), self.window_mean(f, false, k))
    }
}

pub fn run_kslc3_cartpole(cfg: &ResolvedConfig, pre: &Pretrained) -> anyhow::Result<Kslc3Outcome> {
    let k = &cfg.kslc3;
    let bases = Arc::new(pre.policies.clone());
    let policy = PolicyTemplate::Mixture {
        bases,
        clip: vec![(-1.0, 1.0)],
        linf_bound: k.linf_bound,
        penalty_weight: k.linf_penalty_weight,
    };
    let d_phi = pre.phi.output_dim();
    let rows = k.imitation_rows.min(d_phi);
    let spectrum = SpectrumCostSpec::new()
        .with(1.0, SpectrumTerm::RowsHsImitation { target: pre.a_star.matrix.clone(), rows: 0..rows })
        .with(k.abs_eig_weight, SpectrumTerm::AbsEigSum);
    let step_cost = StepCostSpec::VelocityTarget { scale: k.cost_scale, target: k.velocity_target, fall_penalty: k.fall_penalty };
    let x0s = init_states(EnvKind::Cartpole, 1, derive_seed(cfg.seed, stream::INIT));

    let baseline_spec = KsnrObjectiveSpec {
        env_kind: EnvKind::Cartpole,
        policy: policy.clone(),
        phi: pre.phi.clone(),
        spectrum: spectrum.clone(),
        step_cost,
        horizon: k.horizon,
        ridge: k.ridge,
        init_states: InitStates::Fixed(x0s.clone()),
    };
    let mut objective = KsnrObjective::new(&baseline_spec)?;
    let dim = policy.param_dim();
    log::info!("solving the true-environment baseline");
    let base = cem_optimize(&mut objective, &k.baseline_cem.build(dim, derive_seed(cfg.seed, stream::CEM)))?;
    let base_eval = evaluate_ksnr(&baseline_spec, &base.best_theta, &x0s)?;
    let baseline = base_eval.spectrum_cost + base_eval.cumulative_cost;

    let zeta = Arc::new(sample_rff(dim, k.zeta_rff_dim, k.zeta_bandwidth, false, derive_seed(cfg.seed, stream::ZETA))?);
    let spec = KsLc3Spec {
        env_kind: EnvKind::Cartpole,
        policy,
        phi: pre.phi.clone(),
        zeta,
        spectrum,
        step_cost,
        horizon: k.horizon,
        rollout: k.model_rollout,
        iota: k.iota,
        cem: k.cem.build(dim, 0),
        measure_ridge: k.ridge,
    };
    let mut posterior = Posterior::new(d_phi, k.zeta_rff_dim, k.lambda, k.noise_sigma2)?;
    let episodes = run_kslc3(&mut posterior, &spec, &x0s, k.episodes, derive_seed(cfg.seed, stream::EPISODES))?;
    let records: Vec<_> = episodes.iter().map(|e| e.record.clone()).collect();
    let regret = empirical_regret(&records, &vec![baseline; records.len()])?;

    let mut artifacts = Artifacts::default();
    artifacts.add("episodes.csv", csv_bytes(|w| write_episodes_csv(&records, &regret, w))?);
    let last = episodes.last().ok_or_else(|| anyhow!("no episodes"))?;
    artifacts.add("trajectories.csv", csv_bytes(|w| write_trajectories_csv(&last.trajectories, true, w))?);
    artifacts.add("baseline_trajectories.csv", csv_bytes(|w| write_trajectories_csv(&base_eval.trajectories, true, w))?);
    artifacts.add("baseline_cem_history.csv", csv_bytes(|w| base.write_history_csv(w))?);
    let ep = |f: fn(&Episode) -> f64, label: &str| Series::new(label, episodes.iter().map(|e| (e.record.t as f64, f(e))).collect());
    artifacts.add(
        "spectrum_cost.svg",
        line_plot(
            "spectrum cost per episode",
            "episode",
            "cost",
            &[ep(|e| e.record.spectrum_cost_est, "estimated"), ep(|e| e.record.spectrum_cost_measured, "measured")],
        ),
    );
    artifacts.add("cumulative_cost.svg", line_plot("cumulative cost per episode", "episode", "cost", &[ep(|e| e.record.cumulative_cost, "cumulative")]));
    artifacts.add("regret.svg", line_plot("empirical regret", "episode", "regret", &[Series::indexed("regret", regret.iter().copied())]));
    let v = Series::indexed("last episode", last.trajectories[0].observations.iter().map(|o| o[1]));
    let vb = Series::indexed("baseline", base_eval.trajectories[0].observations.iter().map(|o| o[1]));
    artifacts.add("trajectories.svg", line_plot("cart velocity", "step", "v", &[v, vb]));
    if k.checkpoint {
        let dir = std::env::temp_dir().join(format!("ksnr-checkpoint-{}", std::process::id()));
        posterior.save_checkpoint(&dir)?;
        artifacts.add("posterior.bin", std::fs::read(&dir)?);
        std::fs::remove_file(&dir).ok();
    }

    let mut outcome = Kslc3Outcome { episodes, baseline, baseline_theta: base.best_theta, regret, posterior, output: RunOutput { metrics: vec![], artifacts } };
    let (s_first, s_last) = outcome.measured_spectrum_first_last(4);
    let (g_first, g_last) = outcome.gap_first_last(4);
    let last_rec = &outcome.episodes.last().expect("non-empty").record;
    outcome.output.metrics = vec![
        ("spectrum_cost".into(), last_rec.spectrum_cost_measured),
        ("spectrum_cost_est".into(), last_rec.spectrum_cost_est),
        ("cumulative_cost".into(), last_rec.cumulative_cost),
        ("spectral_radius".into(), final_radius(&outcome, &pre.phi, k.ridge)?),
        ("baseline_objective".into(), baseline),
        ("spectrum_cost_first4".into(), s_first),
        ("spectrum_cost_last4".into(), s_last),
        ("gap_first4".into(), g_first),
        ("gap_last4".into(), g_last),
        ("regret".into(), *outcome.regret.last().expect("non-empty")),
        ("info_gain".into(), last_rec.info_gain),
        ("beta_t".into(), last_rec.beta_t),
    ];
    Ok(outcome)
}

fn final_radius(out: &Kslc3Outcome, phi: &FeatureMap, ridge: f64) -> anyhow::Result<f64> {
    let last = out.episodes.last().expect("non-empty");
    let a: DMatrix<f64> = fit_koopman(&assemble_pairs(&last.trajectories, phi)?, ridge)?;
    Ok(spectral::spectral_radius(&a)?)
}
