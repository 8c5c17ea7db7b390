//! Cross-entropy method and the spectrum-regularized policy objective.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::costs::{eval_spectrum_cost, SpectrumCostSpec, StepCostSpec};
use crate::envs::{rollout, EnvKind, EnvState, Trajectory};
use crate::error::{KsnrError, Result};
use crate::features::FeatureMap;
use crate::koopman::{assemble_pairs, fit_koopman};
use crate::policy::{linf_excess, ActionClip, MixturePolicy, Policy, RffPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub samples: usize,
    pub elite_size: usize,
    pub iterations: usize,
    pub init_mean: Vec<f64>,
    pub init_std: Vec<f64>,
    pub std_floor: f64,
    pub seed: u64,
}

impl CemConfig {
    /// 200 samples, 20 elites, 50 iterations, mean 0, std 1, floor 1e-3.
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            samples: 200,
            elite_size: 20,
            iterations: 50,
            init_mean: vec![0.0; dim],
            init_std: vec![1.0; dim],
            std_floor: 1e-3,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.init_mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.elite_size == 0 || self.iterations == 0 {
            return Err(KsnrError::InvalidParameter("CEM samples, elite_size and iterations must be positive".into()));
        }
        if self.elite_size > self.samples {
            return Err(KsnrError::InvalidParameter(format!(
                "elite_size {} exceeds samples {}",
                self.elite_size, self.samples
            )));
        }
        if self.init_std.len() != self.init_mean.len() {
            return Err(KsnrError::DimensionMismatch {
                context: "CEM init_std",
                expected: self.init_mean.len(),
                actual: self.init_std.len(),
            });
        }
        if self.init_mean.is_empty() {
            return Err(KsnrError::EmptyInput("CEM parameter vector"));
        }
        if self.init_std.iter().any(|s| !(*s > 0.0)) || !(self.std_floor > 0.0) {
            return Err(KsnrError::InvalidParameter("CEM std and std_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Something CEM can minimize. `begin_iteration` runs once before each
/// iteration's candidates are scored, so every candidate of that iteration
/// sees the same objective.
pub trait CemObjective {
    fn begin_iteration(&mut self, _iteration: usize) -> Result<()> {
        Ok(())
    }

    fn evaluate(&self, theta: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> CemObjective for F {
    fn evaluate(&self, theta: &[f64]) -> f64 {
        self(theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemIteration {
    pub iteration: usize,
    /// Best value seen up to and including this iteration.
    pub best: f64,
    /// Mean objective over this iteration's elite set.
    pub elite_mean: f64,
    /// Euclidean norm of the sampling std after the refit.
    pub std_norm: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemResult {
    pub best_theta: Vec<f64>,
    pub best_value: f64,
    pub final_mean: Vec<f64>,
    pub history: Vec<CemIteration>,
}

impl CemResult {
    /// Columns `iteration,best,elite_mean,std_norm`.
    pub fn write_history_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "iteration,best,elite_mean,std_norm")?;
        for h in &self.history {
            writeln!(w, "{},{},{},{}", h.iteration, h.best, h.elite_mean, h.std_norm)?;
        }
        Ok(())
    }
}

/// Diagonal-Gaussian CEM. Candidates with non-finite objective never enter
/// the elite set; an iteration where every candidate is non-finite is an
/// error.
pub fn cem_optimize<O: CemObjective + ?Sized>(objective: &mut O, config: &CemConfig) -> Result<CemResult> {
    config.validate()?;
    let dim = config.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mean = config.init_mean.clone();
    let mut std: Vec<f64> = config.init_std.iter().map(|s| s.max(config.std_floor)).collect();
    let mut best_theta = mean.clone();
    let mut best_value = f64::INFINITY;
    let mut history = Vec::with_capacity(config.iterations);
    let mut candidates = vec![0.0; config.samples * dim];
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(config.samples);

    for iteration in 0..config.iterations {
        objective.begin_iteration(iteration)?;
        for c in candidates.chunks_exact_mut(dim) {
            for ((x, m), s) in c.iter_mut().zip(&mean).zip(&std) {
                let g: f64 = StandardNormal.sample(&mut rng);
                *x = m + s * g;
            }
        }
        scored.clear();
        for (k, c) in candidates.chunks_exact(dim).enumerate() {
            let v = objective.evaluate(c);
            if v.is_finite() {
                scored.push((v, k));
            }
        }
        if scored.is_empty() {
            return Err(KsnrError::AllCandidatesFailed(config.samples));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (top_value, top_idx) = scored[0];
        if top_value < best_value {
            best_value = top_value;
            best_theta.copy_from_slice(&candidates[top_idx * dim..(top_idx + 1) * dim]);
        }

        let elites = &scored[..config.elite_size.min(scored.len())];
        let n = elites.len() as f64;
        for j in 0..dim {
            let m = elites.iter().map(|&(_, k)| candidates[k * dim + j]).sum::<f64>() / n;
            let var = elites.iter().map(|&(_, k)| (candidates[k * dim + j] - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            std[j] = var.sqrt().max(config.std_floor);
        }
        let elite_mean = elites.iter().map(|e| e.0).sum::<f64>() / n;
        history.push(CemIteration {
            iteration,
            best: best_value,
            elite_mean,
            std_norm: std.iter().map(|s| s * s).sum::<f64>().sqrt(),
            mean: mean.clone(),
            std: std.clone(),
        });
    }
    Ok(CemResult { best_theta, best_value, final_mean: mean, history })
}

/// How a parameter vector becomes a policy.
#[derive(Debug, Clone)]
pub enum PolicyTemplate {
    /// `Θ` is the row-major weight matrix of an RFF policy.
    Rff { map: Arc<FeatureMap>, action_dim: usize, clip: ActionClip },
    /// `Θ` mixes fixed base policies; `penalty_weight·excess²` is added when
    /// `‖Θ‖_∞` exceeds `linf_bound`.
    Mixture { bases: Arc<Vec<RffPolicy>>, clip: ActionClip, linf_bound: f64, penalty_weight: f64 },
}

impl PolicyTemplate {
    pub fn param_dim(&self) -> usize {
        match self {
            PolicyTemplate::Rff { map, action_dim, .. } => action_dim * map.output_dim(),
            PolicyTemplate::Mixture { bases, .. } => bases.len(),
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            PolicyTemplate::Rff { action_dim, .. } => *action_dim,
            PolicyTemplate::Mixture { clip, .. } => clip.len(),
        }
    }

    pub fn build(&self, theta: &[f64]) -> Result<Box<dyn Policy + Send + Sync>> {
        match self {
            PolicyTemplate::Rff { map, action_dim, clip } => {
                Ok(Box::new(RffPolicy::from_params(map.clone(), *action_dim, theta, clip.clone())?))
            }
            PolicyTemplate::Mixture { bases, clip, .. } => Ok(Box::new(MixturePolicy::new(bases.clone(), theta, clip.clone())?)),
        }
    }

    /// Parameter-space penalty (zero for RFF policies).
    pub fn penalty(&self, theta: &[f64]) -> f64 {
        match self {
            PolicyTemplate::Rff { .. } => 0.0,
            PolicyTemplate::Mixture { linf_bound, penalty_weight, .. } => {
                let e = linf_excess(theta, *linf_bound);
                penalty_weight * e * e
            }
        }
    }
}

/// Initial states fed to each objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStates {
    /// A fresh set of `count` states per CEM iteration, shared by all of that
    /// iteration's candidates and drawn from `seed` and the iteration index.
    PerIteration { count: usize, seed: u64 },
    Fixed(Vec<EnvState>),
}

impl InitStates {
    pub fn states_for(&self, kind: EnvKind, iteration: usize) -> Vec<EnvState> {
        match self {
            InitStates::PerIteration { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(iteration as u64);
                (0..*count).map(|_| kind.sample_init(&mut rng)).collect()
            }
            InitStates::Fixed(states) => states.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KsnrObjectiveSpec {
    pub env_kind: EnvKind,
    pub policy: PolicyTemplate,
    pub phi: Arc<FeatureMap>,
    pub spectrum: SpectrumCostSpec,
    pub step_cost: StepCostSpec,
    pub horizon: usize,
    pub ridge: f64,
    pub init_states: InitStates,
}

impl KsnrObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.phi.input_dim != self.env_kind.obs_dim() {
            return Err(KsnrError::DimensionMismatch {
                context: "phi input dimension",
                expected: self.env_kind.obs_dim(),
                actual: self.phi.input_dim,
            });
        }
        if self.policy.action_dim() != self.env_kind.action_dim() {
            return Err(KsnrError::DimensionMismatch {
                context: "policy action dimension",
                expected: self.env_kind.action_dim(),
                actual: self.policy.action_dim(),
            });
        }
        if self.horizon == 0 {
            return Err(KsnrError::InvalidParameter("horizon must be positive".into()));
        }
        if let InitStates::Fixed(s) = &self.init_states {
            if s.iter().any(|x| x.kind() != self.env_kind) {
                return Err(KsnrError::InvalidParameter("initial state of the wrong environment".into()));
            }
        }
        self.step_cost.check_layout(self.env_kind.obs_dim())?;
        self.spectrum.validate(self.phi.output_dim())
    }
}

/// Every component of one objective evaluation.
#[derive(Debug, Clone)]
pub struct KsnrEvaluation {
    pub koopman: DMatrix<f64>,
    pub spectrum_cost: f64,
    pub cumulative_cost: f64,
    pub penalty: f64,
    pub trajectories: Vec<Trajectory>,
}

impl KsnrEvaluation {
    pub fn total(&self) -> f64 {
        self.spectrum_cost + self.cumulative_cost + self.penalty
    }
}

/// Roll out `policy(Θ)` from each initial state, fit the Koopman matrix on
/// all transitions, and score it.
pub fn evaluate_ksnr(spec: &KsnrObjectiveSpec, theta: &[f64], states: &[EnvState]) -> Result<KsnrEvaluation> {
    if states.is_empty() {
        return Err(KsnrError::EmptyInput("initial states"));
    }
    let policy = spec.policy.build(theta)?;
    let trajectories = states
        .iter()
        .map(|&x0| rollout(x0, &policy, spec.horizon, &spec.step_cost))
        .collect::<Result<Vec<_>>>()?;
    let pairs = assemble_pairs(&trajectories, &spec.phi)?;
    let koopman = fit_koopman(&pairs, spec.ridge)?;
    if koopman.iter().any(|x| !x.is_finite()) {
        return Err(KsnrError::NonFinite("fitted Koopman matrix"));
    }
    let spectrum_cost = eval_spectrum_cost(&spec.spectrum, &koopman)?;
    let cumulative_cost = trajectories.iter().map(Trajectory::total_cost).sum();
    Ok(KsnrEvaluation { koopman, spectrum_cost, cumulative_cost, penalty: spec.policy.penalty(theta), trajectories })
}

/// `Λ(A) + Σ step costs (+ parameter penalty)`; failures score `+∞`.
pub fn ksnr_objective(spec: &KsnrObjectiveSpec, theta: &[f64], states: &[EnvState]) -> f64 {
    match evaluate_ksnr(spec, theta, states) {
        Ok(e) => e.total(),
        Err(err) => {
            log::warn!("candidate evaluation failed: {err}");
            f64::INFINITY
        }
    }
}

/// [`CemObjective`] adapter that refreshes the initial states per iteration.
pub struct KsnrObjective<'a> {
    pub spec: &'a KsnrObjectiveSpec,
    states: Vec<EnvState>,
}

impl<'a> KsnrObjective<'a> {
    pub fn new(spec: &'a KsnrObjectiveSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, states: spec.init_states.states_for(spec.env_kind, 0) })
    }

    pub fn states(&self) -> &[EnvState] {
        &self.states
    }
}

impl CemObjective for KsnrObjective<'_> {
    fn begin_iteration(&mut self, iteration: usize) -> Result<()> {
        self.states = self.spec.init_states.states_for(self.spec.env_kind, iteration);
        Ok(())
    }

    fn evaluate(&self, theta: &[f64]) -> f64 {
        ksnr_objective(self.spec, theta, &self.states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(theta: &[f64]) -> f64 {
        theta.iter().enumerate().map(|(i, x)| (x - i as f64 * 0.25).powi(2)).sum()
    }

    #[test]
    fn finds_quadratic_minimum() {
        let mut f = quad;
        let r = cem_optimize(&mut f, &CemConfig::new(5, 1)).unwrap();
        for (i, x) in r.best_theta.iter().enumerate() {
            assert!((x - i as f64 * 0.25).abs() < 1e-2);
        }
        assert_eq!(r.history.len(), 50);
        assert_eq!(r.best_value, quad(&r.best_theta));
    }

    #[test]
    fn deterministic_history() {
        let cfg = CemConfig { iterations: 5, ..CemConfig::new(3, 9) };
        let a = cem_optimize(&mut quad, &cfg).unwrap();
        let b = cem_optimize(&mut quad, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_candidates() {
        let cfg = CemConfig { iterations: 3, ..CemConfig::new(2, 0) };
        let mut all_bad = |_: &[f64]| f64::NAN;
        assert!(matches!(cem_optimize(&mut all_bad, &cfg), Err(KsnrError::AllCandidatesFailed(200))));
        let mut some_bad = |t: &[f64]| if t[0] > 0.0 { f64::INFINITY } else { t[0] * t[0] };
        let r = cem_optimize(&mut some_bad, &cfg).unwrap();
        assert!(r.best_value.is_finite());
    }

    #[test]
    fn config_checks() {
        let mut cfg = CemConfig::new(2, 0);
        cfg.elite_size = 300;
        assert!(cfg.validate().is_err());
        let cfg = CemConfig { init_std: vec![1.0], ..CemConfig::new(2, 0) };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn history_csv_header() {
        let cfg = CemConfig { iterations: 2, samples: 10, elite_size: 2, ..CemConfig::new(1, 0) };
        let r = cem_optimize(&mut quad, &cfg).unwrap();
        let mut buf = Vec::new();
        r.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("iteration,best,elite_mean,std_norm"));
        assert_eq!(text.lines().count(), 3);
    }
}
