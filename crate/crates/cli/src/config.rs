//! Experiment configuration. Every field has a default taken from the
//! hyperparameter tables, so `{}` is a valid config file; the desk scale
//! halves optimizer budgets after loading.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ksnr_core::{CemConfig, ModelRollout, PretrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    LimitCycleImitate,
    LimitCycleTargetTrain,
    CartpoleStable,
    Kslc3Cartpole,
    PretrainCartpole,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::LimitCycleImitate => "limit-cycle-imitate",
            Experiment::LimitCycleTargetTrain => "limit-cycle-target-train",
            Experiment::CartpoleStable => "cartpole-stable",
            Experiment::Kslc3Cartpole => "kslc3-cartpole",
            Experiment::PretrainCartpole => "pretrain-cartpole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    #[default]
    Paper,
    Desk,
}

/// CEM budget; the initial mean and std are broadcast to every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemSettings {
    pub samples: usize,
    pub elite_size: usize,
    pub iterations: usize,
    pub init_mean: f64,
    pub init_std: f64,
    pub std_floor: f64,
}

impl Default for CemSettings {
    fn default() -> Self {
        Self { samples: 200, elite_size: 20, iterations: 50, init_mean: 0.0, init_std: 1.0, std_floor: 1e-3 }
    }
}

impl CemSettings {
    fn with_iterations(iterations: usize) -> Self {
        Self { iterations, ..Self::default() }
    }

    pub fn build(&self, dim: usize, seed: u64) -> CemConfig {
        CemConfig {
            samples: self.samples,
            elite_size: self.elite_size,
            iterations: self.iterations,
            init_mean: vec![self.init_mean; dim],
            init_std: vec![self.init_std; dim],
            std_floor: self.std_floor,
            seed,
        }
    }

    fn halve(&mut self) {
        self.samples = half(self.samples);
        self.elite_size = half(self.elite_size);
        self.iterations = half(self.iterations);
    }
}

fn half(n: usize) -> usize {
    (n / 2).max(1)
}

/// Which CEM output becomes the reported policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySelection {
    /// The lowest objective value seen. With fresh initial states per
    /// iteration this favors candidates that met an easy state.
    Best,
    /// The sampling mean after the last iteration.
    #[default]
    FinalMean,
}

impl PolicySelection {
    pub fn pick<'a>(self, r: &'a ksnr_core::CemResult) -> &'a [f64] {
        match self {
            PolicySelection::Best => &r.best_theta,
            PolicySelection::FinalMean => &r.final_mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImitationCost {
    /// L1 distance between canonical top modes.
    TopMode,
    /// Squared Hilbert-Schmidt distance between whole matrices.
    HilbertSchmidt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitCycleConfig {
    pub cem: CemSettings,
    pub horizon: usize,
    pub policy_rff_dim: usize,
    pub policy_bandwidth: f64,
    /// Both velocity commands are clipped to `[−action_bound, action_bound]`.
    pub action_bound: f64,
    pub phi_rff_dim: usize,
    pub phi_bandwidth: f64,
    pub target_iterations: usize,
    pub target_horizon: usize,
    pub ridge: f64,
    pub imitation: ImitationCost,
    pub spectrum_weight: f64,
    pub selection: PolicySelection,
    pub eval_rollouts: usize,
    pub eval_horizon: usize,
    /// Trailing steps of each evaluation rollout scored for `|r − 1|`.
    pub eval_tail: usize,
}

impl Default for LimitCycleConfig {
    fn default() -> Self {
        Self {
            cem: CemSettings::default(),
            horizon: 80,
            policy_rff_dim: 50,
            policy_bandwidth: 2.0,
            action_bound: 3.0,
            phi_rff_dim: 80,
            phi_bandwidth: 3.0,
            target_iterations: 500,
            target_horizon: 80,
            ridge: 1.0,
            imitation: ImitationCost::TopMode,
            spectrum_weight: 1.0,
            selection: PolicySelection::default(),
            eval_rollouts: 5,
            eval_horizon: 80,
            eval_tail: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartpoleStableConfig {
    pub cem: CemSettings,
    pub horizon: usize,
    /// Size of the RFF block of φ; the 4-dimensional state is prepended.
    pub phi_rff_dim: usize,
    pub phi_bandwidth: f64,
    pub policy_rff_dim: usize,
    pub policy_bandwidth: f64,
    /// Weight `w` of `w·max(1, ρ(A))`.
    pub spectrum_weight: f64,
    pub velocity_reward_scale: f64,
    pub fall_penalty: f64,
    pub ridge: f64,
    pub selection: PolicySelection,
    pub eval_horizon: usize,
}

impl Default for CartpoleStableConfig {
    fn default() -> Self {
        Self {
            cem: CemSettings::with_iterations(100),
            horizon: 100,
            phi_rff_dim: 46,
            phi_bandwidth: 2.0,
            policy_rff_dim: 100,
            policy_bandwidth: 2.0,
            spectrum_weight: 1e4,
            velocity_reward_scale: 1e-3,
            fall_penalty: 1.0,
            ridge: 1.0,
            selection: PolicySelection::default(),
            eval_horizon: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Kslc3Config {
    pub cem: CemSettings,
    /// CEM budget of the true-environment baseline.
    pub baseline_cem: CemSettings,
    pub episodes: usize,
    pub horizon: usize,
    pub model_rollout: ModelRollout,
    pub zeta_rff_dim: usize,
    pub zeta_bandwidth: f64,
    pub lambda: f64,
    pub iota: f64,
    pub noise_sigma2: f64,
    pub linf_bound: f64,
    /// Weight `w` of the parameter penalty `w·(‖Θ‖_∞ − bound)²₊`.
    pub linf_penalty_weight: f64,
    pub velocity_target: f64,
    pub cost_scale: f64,
    pub fall_penalty: f64,
    /// Leading rows of `A` compared against `A*`.
    pub imitation_rows: usize,
    pub abs_eig_weight: f64,
    pub ridge: f64,
    /// Write the final posterior (large: `(d_φ·d_ζ)²` doubles).
    pub checkpoint: bool,
}

impl Default for Kslc3Config {
    fn default() -> Self {
        Self {
            cem: CemSettings::default(),
            baseline_cem: CemSettings::default(),
            episodes: 30,
            horizon: 500,
            model_rollout: ModelRollout::default(),
            zeta_rff_dim: 50,
            zeta_bandwidth: 5.0,
            lambda: 1.0,
            iota: 1e-4,
            noise_sigma2: ksnr_core::kslc3::DEFAULT_NOISE_SIGMA2,
            linf_bound: 2.0,
            linf_penalty_weight: 10.0,
            velocity_target: 1.5,
            cost_scale: 1e-4,
            fall_penalty: 100.0,
            imitation_rows: 4,
            abs_eig_weight: 0.01,
            ridge: 1.0,
            checkpoint: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub scale: Scale,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub limit_cycle: LimitCycleConfig,
    pub cartpole_stable: CartpoleStableConfig,
    pub pretrain: PretrainConfig,
    pub kslc3: Kslc3Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            scale: Scale::Paper,
            seed: 100,
            out_dir: PathBuf::from("out"),
            limit_cycle: LimitCycleConfig::default(),
            cartpole_stable: CartpoleStableConfig::default(),
            pretrain: PretrainConfig::default(),
            kslc3: Kslc3Config::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Apply the scale profile. Desk scale halves CEM samples, elites and
    /// iterations, the MPPI sample count and pretraining iterations, and the
    /// target-operator training iterations.
    pub fn resolve(mut self) -> anyhow::Result<ResolvedConfig> {
        if self.scale == Scale::Desk {
            self.limit_cycle.cem.halve();
            self.limit_cycle.target_iterations = half(self.limit_cycle.target_iterations);
            self.cartpole_stable.cem.halve();
            self.kslc3.cem.halve();
            self.kslc3.baseline_cem.halve();
            self.kslc3.episodes = self.kslc3.episodes.min(20);
            self.pretrain.iterations = half(self.pretrain.iterations);
            self.pretrain.mppi.samples = half(self.pretrain.mppi.samples);
        }
        self.validate()?;
        Ok(ResolvedConfig(self))
    }

    fn validate(&self) -> anyhow::Result<()> {
        for (name, c) in [
            ("limit_cycle.cem", &self.limit_cycle.cem),
            ("cartpole_stable.cem", &self.cartpole_stable.cem),
            ("kslc3.cem", &self.kslc3.cem),
            ("kslc3.baseline_cem", &self.kslc3.baseline_cem),
        ] {
            if c.elite_size > c.samples {
                bail!("{name}: elite_size {} exceeds samples {}", c.elite_size, c.samples);
            }
            if !(c.init_std > 0.0) || !(c.std_floor > 0.0) {
                bail!("{name}: init_std and std_floor must be positive");
            }
        }
        let lc = &self.limit_cycle;
        if lc.eval_tail == 0 || lc.eval_tail > lc.eval_horizon {
            bail!("limit_cycle.eval_tail must be in 1..=eval_horizon");
        }
        if self.kslc3.imitation_rows > 4 + self.pretrain.phi_rff_dim {
            bail!("kslc3.imitation_rows exceeds d_phi");
        }
        if self.kslc3.episodes == 0 {
            bail!("kslc3.episodes must be positive");
        }
        Ok(())
    }
}

/// A config after scale resolution and validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ResolvedConfig(pub ExperimentConfig);

impl std::ops::Deref for ResolvedConfig {
    type Target = ExperimentConfig;

    fn deref(&self) -> &ExperimentConfig {
        &self.0
    }
}
