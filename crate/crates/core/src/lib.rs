//! Koopman spectrum nonlinear regulators.
//!
//! Policies are scored by a cost on the spectrum of the Koopman matrix fitted
//! to the closed-loop trajectories they generate, plus an ordinary cumulative
//! cost. The crate provides the estimators (RFF features, ridge Koopman fits,
//! dense eigendecompositions), the spectrum costs, two environments, CEM and
//! MPPI optimizers, and an online Thompson-sampling learner.

pub mod cem;
pub mod costs;
pub mod envs;
pub mod error;
pub mod features;
pub mod koopman;
pub mod kslc3;
pub mod linalg;
pub mod mppi;
pub mod policy;
pub mod spectral;

pub use cem::{cem_optimize, evaluate_ksnr, ksnr_objective, CemConfig, CemObjective, CemResult, InitStates, KsnrObjective, KsnrObjectiveSpec, PolicyTemplate};
pub use costs::{eval_spectrum_cost, eval_step_cost, SpectrumCostSpec, SpectrumTerm, StepCostSpec};
pub use envs::{rollout, EnvKind, EnvState, LimitCycleTruth, Trajectory};
pub use error::{KsnrError, Result};
pub use features::{kron_feature, sample_rff, FeatureMap};
pub use koopman::{assemble_pairs, fit_koopman, KoopmanEstimate, TransitionMatrixPair};
pub use kslc3::{beta_radius, empirical_regret, info_gain, koopman_from_model, posterior_update, sample_model, thompson_episode, EpisodeRecord, KsLc3Spec, ModelRollout, Posterior};
pub use mppi::{mppi_plan, mppi_weights, pretrain_cartpole_policies, MppiConfig, PretrainConfig, Pretrained};
pub use policy::{clone_policy, MixturePolicy, Policy, RffPolicy};
pub use spectral::{eig_general, holder_constants, spectral_radius, top_mode, EigenDecomposition, HolderConstants};

/// Version string written into run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
