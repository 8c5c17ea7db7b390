//! Sampling-based MPC (path-integral weighting) and the cart-pole pretraining
//! curricula that produce the base policies for the online learner.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::costs::StepCostSpec;
use crate::envs::{rollout, EnvKind, EnvState, Trajectory};
use crate::error::{KsnrError, Result};
use crate::features::{sample_rff, FeatureMap};
use crate::koopman::{assemble_pairs, fit_koopman, KoopmanEstimate};
use crate::policy::{clip_action, clone_policy, RffPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MppiConfig {
    pub control_std: f64,
    pub temperature: f64,
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self { control_std: 0.4, temperature: 0.1, horizon: 100, samples: 524, seed: 0 }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.control_std > 0.0) || !(self.temperature > 0.0) || self.horizon == 0 || self.samples == 0 {
            return Err(KsnrError::InvalidParameter("MPPI parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Softmin weights `w_k ∝ exp(−(S_k − min S)/temperature)`. Non-finite costs
/// get zero weight; if no cost is finite the weights are uniform.
pub fn mppi_weights(costs: &[f64], temperature: f64) -> Vec<f64> {
    let min = costs.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return vec![1.0 / costs.len() as f64; costs.len()];
    }
    let mut w: Vec<f64> = costs
        .iter()
        .map(|&c| if c.is_finite() { (-(c - min) / temperature).exp() } else { 0.0 })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// One MPPI planning step. Perturbed controls are clipped to `clip`; each
/// sample's cost sums `cost_fn` over its post-step states. Returns the first
/// action of the weighted control sequence and that sequence shifted by one
/// step (last control repeated).
pub fn mppi_plan<S, M, C, R>(
    model_step: M,
    cost_fn: C,
    state: &S,
    nominal: &[Vec<f64>],
    clip: &[(f64, f64)],
    config: &MppiConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)>
where
    S: Clone,
    M: Fn(&S, &[f64]) -> S,
    C: Fn(&S) -> f64,
    R: Rng + ?Sized,
{
    config.validate()?;
    if nominal.len() != config.horizon {
        return Err(KsnrError::DimensionMismatch { context: "MPPI nominal length", expected: config.horizon, actual: nominal.len() });
    }
    let udim = clip.len();
    if nominal.iter().any(|u| u.len() != udim) {
        return Err(KsnrError::DimensionMismatch { context: "MPPI control dimension", expected: udim, actual: nominal[0].len() });
    }
    let h = config.horizon;
    let mut controls = vec![0.0; config.samples * h * udim];
    let mut costs = Vec::with_capacity(config.samples);
    for k in 0..config.samples {
        let seq = &mut controls[k * h * udim..(k + 1) * h * udim];
        let mut s = state.clone();
        let mut total = 0.0;
        for (t, u) in seq.chunks_exact_mut(udim).enumerate() {
            for (x, base) in u.iter_mut().zip(&nominal[t]) {
                let g: f64 = StandardNormal.sample(rng);
                *x = base + config.control_std * g;
            }
            clip_action(u, clip);
            s = model_step(&s, u);
            total += cost_fn(&s);
        }
        costs.push(total);
    }
    let weights = mppi_weights(&costs, config.temperature);
    let mut updated = vec![vec![0.0; udim]; h];
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let seq = &controls[k * h * udim..(k + 1) * h * udim];
        for (acc, u) in updated.iter_mut().zip(seq.chunks_exact(udim)) {
            for (a, x) in acc.iter_mut().zip(u) {
                *a += w * x;
            }
        }
    }
    let first = updated[0].clone();
    let mut shifted: Vec<Vec<f64>> = updated[1..].to_vec();
    shifted.push(updated[h - 1].clone());
    Ok((first, shifted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub mppi: MppiConfig,
    /// Planning horizon of the second position movement.
    pub follow_up_horizon: usize,
    pub iterations: usize,
    /// Steps spent on each position movement.
    pub position_steps: usize,
    /// Steps spent on each velocity movement.
    pub velocity_steps: usize,
    pub position_target: f64,
    pub velocity_target: f64,
    pub fall_penalty: f64,
    pub policy_rff_dim: usize,
    pub policy_bandwidth: f64,
    pub phi_rff_dim: usize,
    pub phi_bandwidth: f64,
    pub ridge: f64,
    /// Rollouts of the first policy used to fit `A*`.
    pub target_rollouts: usize,
    pub target_horizon: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            mppi: MppiConfig::default(),
            follow_up_horizon: 120,
            iterations: 20,
            position_steps: 150,
            velocity_steps: 400,
            position_target: 0.3,
            velocity_target: 1.5,
            fall_penalty: 100.0,
            policy_rff_dim: 2000,
            policy_bandwidth: 1.5,
            phi_rff_dim: 56,
            phi_bandwidth: 1.5,
            ridge: 1.0,
            target_rollouts: 5,
            target_horizon: 500,
            seed: 0,
        }
    }
}

/// Output of the pretraining curricula.
#[derive(Debug, Clone)]
pub struct Pretrained {
    /// Position oscillation, velocity −target, velocity +target.
    pub policies: Vec<RffPolicy>,
    /// Linear prefix plus RFF block over the cart-pole observation.
    pub phi: Arc<FeatureMap>,
    pub a_star: KoopmanEstimate,
    /// MPPI trajectories, one per movement and iteration, in curriculum order.
    pub demonstrations: Vec<Trajectory>,
}

/// Run MPPI on the cart-pole for `steps` steps from `x0`, tracking `cost`.
pub fn mppi_track(x0: EnvState, cost: &StepCostSpec, steps: usize, config: &MppiConfig, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    cost.check_layout(x0.kind().obs_dim())?;
    let clip = vec![(-1.0, 1.0); x0.kind().action_dim()];
    let mut nominal = vec![vec![0.0; clip.len()]; config.horizon];
    let mut states = vec![x0];
    let mut observations = vec![x0.observe()];
    let mut actions = Vec::with_capacity(steps);
    let mut step_costs = Vec::with_capacity(steps);
    let mut s = x0;
    let step_cost = |x: &EnvState| cost.eval(&x.observe()).unwrap_or(f64::INFINITY);
    for _ in 0..steps {
        let (u, next_nominal) = mppi_plan(|x: &EnvState, u: &[f64]| x.step(u), step_cost, &s, &nominal, &clip, config, rng)?;
        nominal = next_nominal;
        step_costs.push(cost.eval(&s.observe())?);
        s = s.step(&u);
        actions.push(u);
        states.push(s);
        observations.push(s.observe());
    }
    Ok(Trajectory { states, observations, actions, step_costs })
}

fn demo_pairs(trajs: &[Trajectory]) -> Vec<(Vec<f64>, Vec<f64>)> {
    trajs
        .iter()
        .flat_map(|t| t.observations.iter().zip(&t.actions).map(|(o, a)| (o.clone(), a.clone())))
        .collect()
}

/// Pretrain the three cart-pole base policies by MPPI and behavior cloning,
/// and fit `A*` from rollouts of the first (position-oscillation) policy.
pub fn pretrain_cartpole_policies(config: &PretrainConfig) -> Result<Pretrained> {
    config.mppi.validate()?;
    if config.iterations == 0 {
        return Err(KsnrError::InvalidParameter("pretraining needs at least one iteration".into()));
    }
    let kind = EnvKind::Cartpole;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pos = |target| StepCostSpec::PositionTarget { scale: 1.0, target, fall_penalty: config.fall_penalty };
    let vel = |target| StepCostSpec::SignedVelocityTarget { scale: 1.0, target, fall_penalty: config.fall_penalty };
    let follow_up = MppiConfig { horizon: config.follow_up_horizon, ..config.mppi.clone() };

    let mut by_policy: [Vec<Trajectory>; 3] = Default::default();
    for it in 0..config.iterations {
        log::info!("pretraining iteration {}/{}", it + 1, config.iterations);
        let x0 = kind.sample_init(&mut rng);
        let leg1 = mppi_track(x0, &pos(-config.position_target), config.position_steps, &config.mppi, &mut rng)?;
        let leg2 = mppi_track(leg1.final_state(), &pos(config.position_target), config.position_steps, &follow_up, &mut rng)?;
        by_policy[0].push(leg1);
        by_policy[0].push(leg2);
        let x0 = kind.sample_init(&mut rng);
        by_policy[1].push(mppi_track(x0, &vel(-config.velocity_target), config.velocity_steps, &config.mppi, &mut rng)?);
        let x0 = kind.sample_init(&mut rng);
        by_policy[2].push(mppi_track(x0, &vel(config.velocity_target), config.velocity_steps, &config.mppi, &mut rng)?);
    }

    let policy_map = Arc::new(sample_rff(kind.obs_dim(), config.policy_rff_dim, config.policy_bandwidth, false, config.seed.wrapping_add(1))?);
    let clip = vec![(-1.0, 1.0)];
    let policies = by_policy
        .iter()
        .map(|trajs| clone_policy(&demo_pairs(trajs), policy_map.clone(), config.ridge, clip.clone()))
        .collect::<Result<Vec<_>>>()?;

    let phi = Arc::new(sample_rff(kind.obs_dim(), config.phi_rff_dim, config.phi_bandwidth, true, config.seed.wrapping_add(2))?);
    let target_trajs = (0..config.target_rollouts.max(1))
        .map(|_| rollout(kind.sample_init(&mut rng), &policies[0], config.target_horizon, &StepCostSpec::None))
        .collect::<Result<Vec<_>>>()?;
    let a_star = KoopmanEstimate::new(fit_koopman(&assemble_pairs(&target_trajs, &phi)?, config.ridge)?)?;

    let [p, v1, v2] = by_policy;
    let demonstrations = p.into_iter().chain(v1).chain(v2).collect();
    Ok(Pretrained { policies, phi, a_star, demonstrations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_prefer_low_cost() {
        let w = mppi_weights(&[3.0, 1.0, 2.0, f64::NAN], 0.5);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[1] > w[2] && w[2] > w[0]);
        assert_eq!(w[3], 0.0);
        assert_eq!(mppi_weights(&[f64::NAN; 4], 1.0), vec![0.25; 4]);
    }

    #[test]
    fn constant_cost_gives_mean_of_samples() {
        let cfg = MppiConfig { horizon: 3, samples: 50, ..MppiConfig::default() };
        let nominal = vec![vec![0.1]; 3];
        let clip = [(-10.0, 10.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (u, shifted) = mppi_plan(|s: &f64, u: &[f64]| s + u[0], |_: &f64| 1.0, &0.0, &nominal, &clip, &cfg, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut mean0 = 0.0;
        for _ in 0..cfg.samples {
            for t in 0..3 {
                let g: f64 = StandardNormal.sample(&mut rng);
                if t == 0 {
                    mean0 += 0.1 + cfg.control_std * g;
                }
            }
        }
        mean0 /= cfg.samples as f64;
        assert!((u[0] - mean0).abs() < 1e-12);
        assert_eq!(shifted.len(), 3);
        assert_eq!(shifted[1], shifted[2]);
    }

    #[test]
    fn nominal_length_checked() {
        let cfg = MppiConfig { horizon: 3, samples: 5, ..MppiConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = mppi_plan(|s: &f64, _: &[f64]| *s, |_: &f64| 0.0, &0.0, &[vec![0.0]], &[(-1.0, 1.0)], &cfg, &mut rng);
        assert!(r.is_err());
    }
}
