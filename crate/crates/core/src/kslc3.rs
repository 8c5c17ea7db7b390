//! Online spectrum-regularized control with a Bayesian linear model.
//!
//! The dynamics model is `φ(x_{h+1}) ≈ M′ (φ(x_h) ⊗ ζ(Θ))`, with one Gaussian
//! posterior per output row sharing the precision `P = λI + Σ z zᵀ`.
//! Episodes pick `Θ` by Thompson sampling: draw `M̂′`, minimize the
//! model-predicted objective with CEM, run the result in the real
//! environment, and fold every observed transition back into `P`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use faer::{Mat, Par};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cem::{cem_optimize, CemConfig, CemObjective, PolicyTemplate};
use crate::costs::{eval_spectrum_cost, SpectrumCostSpec, StepCostSpec};
use crate::envs::{rollout, EnvKind, EnvState, Trajectory};
use crate::error::{KsnrError, Result};
use crate::features::{kron_feature, FeatureMap};
use crate::koopman::{assemble_pairs, fit_koopman};
use crate::linalg::{from_faer, to_faer, SpdFactor};

/// Default noise variance used only for the confidence-radius diagnostic.
pub const DEFAULT_NOISE_SIGMA2: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct Posterior {
    d_phi: usize,
    d_zeta: usize,
    lambda: f64,
    noise_sigma2: f64,
    /// `Σ y zᵀ`, `d_phi × D`.
    moment: Mat<f64>,
    precision: Mat<f64>,
    /// Lower Cholesky factor of `precision`, kept current.
    chol: Mat<f64>,
    logdet_prior: f64,
    logdet_current: f64,
    pairs: usize,
    feature_bound: f64,
}

impl Posterior {
    pub fn new(d_phi: usize, d_zeta: usize, lambda: f64, noise_sigma2: f64) -> Result<Self> {
        if d_phi == 0 || d_zeta == 0 {
            return Err(KsnrError::InvalidParameter("posterior dimensions must be positive".into()));
        }
        if !(lambda > 0.0) || !lambda.is_finite() || !(noise_sigma2 > 0.0) {
            return Err(KsnrError::InvalidParameter("lambda and noise variance must be positive".into()));
        }
        let d = d_phi * d_zeta;
        let logdet_prior = d as f64 * lambda.ln();
        Ok(Self {
            d_phi,
            d_zeta,
            lambda,
            noise_sigma2,
            moment: Mat::zeros(d_phi, d),
            precision: Mat::from_fn(d, d, |i, j| if i == j { lambda } else { 0.0 }),
            chol: Mat::from_fn(d, d, |i, j| if i == j { lambda.sqrt() } else { 0.0 }),
            logdet_prior,
            logdet_current: logdet_prior,
            pairs: 0,
            feature_bound: 0.0,
        })
    }

    pub fn d_phi(&self) -> usize {
        self.d_phi
    }

    pub fn d_zeta(&self) -> usize {
        self.d_zeta
    }

    /// Dimension `d_phi·d_zeta` of the regression input.
    pub fn input_dim(&self) -> usize {
        self.d_phi * self.d_zeta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn noise_sigma2(&self) -> f64 {
        self.noise_sigma2
    }

    pub fn logdet_prior(&self) -> f64 {
        self.logdet_prior
    }

    pub fn logdet_current(&self) -> f64 {
        self.logdet_current
    }

    /// `log det P − log det(λI)`.
    pub fn logdet_ratio(&self) -> f64 {
        self.logdet_current - self.logdet_prior
    }

    /// Number of transitions absorbed.
    pub fn pairs(&self) -> usize {
        self.pairs
    }

    /// Largest `‖z‖` seen so far.
    pub fn feature_bound(&self) -> f64 {
        self.feature_bound
    }

    pub fn precision(&self) -> DMatrix<f64> {
        from_faer(self.precision.as_ref())
    }

    /// Posterior mean `M̄′ = (Σ y zᵀ) P⁻¹`.
    pub fn mean(&self) -> DMatrix<f64> {
        from_faer(self.mean_faer().as_ref())
    }

    fn mean_faer(&self) -> Mat<f64> {
        // P X = Bᵀ  ⇒  X = L⁻ᵀ L⁻¹ Bᵀ, and M̄′ = Xᵀ.
        let mut x = self.moment.transpose().to_owned();
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(self.chol.as_ref(), x.as_mut(), Par::Seq);
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(self.chol.transpose(), x.as_mut(), Par::Seq);
        x.transpose().to_owned()
    }

    fn check_pair(&self, z: &[f64], y: &[f64]) -> Result<()> {
        if z.len() != self.input_dim() {
            return Err(KsnrError::DimensionMismatch { context: "posterior input z", expected: self.input_dim(), actual: z.len() });
        }
        if y.len() != self.d_phi {
            return Err(KsnrError::DimensionMismatch { context: "posterior target y", expected: self.d_phi, actual: y.len() });
        }
        if z.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(KsnrError::NonFinite("posterior update data"));
        }
        Ok(())
    }

    /// Absorb one transition: `P += z zᵀ`, `B += y zᵀ`. The Cholesky factor
    /// gets a rank-one update, and the log-determinant grows by
    /// `log(1 + zᵀP⁻¹z)`, which is `2 Σ log c_k` over that update's scalings.
    pub fn update(&mut self, z: &[f64], y: &[f64]) -> Result<()> {
        self.check_pair(z, y)?;
        let d = self.input_dim();
        for j in 0..d {
            for i in 0..d {
                self.precision[(i, j)] += z[i] * z[j];
            }
            for (r, &yr) in y.iter().enumerate() {
                self.moment[(r, j)] += yr * z[j];
            }
        }
        let mut x = z.to_vec();
        let mut log_gain = 0.0;
        for k in 0..d {
            let lkk = self.chol[(k, k)];
            let r = lkk.hypot(x[k]);
            let c = r / lkk;
            let s = x[k] / lkk;
            self.chol[(k, k)] = r;
            log_gain += c.ln();
            for i in k + 1..d {
                let lik = (self.chol[(i, k)] + s * x[i]) / c;
                x[i] = c * x[i] - s * lik;
                self.chol[(i, k)] = lik;
            }
        }
        self.logdet_current += 2.0 * log_gain;
        self.pairs += 1;
        self.feature_bound = self.feature_bound.max(norm(z));
        Ok(())
    }

    /// Absorb many transitions at once (columns of `z` and `y`). Equivalent to
    /// repeated [`Self::update`] calls, but refactors `P` once.
    pub fn update_batch(&mut self, z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
        if z.ncols() != y.ncols() {
            return Err(KsnrError::DimensionMismatch { context: "posterior batch columns", expected: z.ncols(), actual: y.ncols() });
        }
        if z.ncols() == 0 {
            return Ok(());
        }
        if z.nrows() != self.input_dim() || y.nrows() != self.d_phi {
            return Err(KsnrError::DimensionMismatch { context: "posterior batch rows", expected: self.input_dim(), actual: z.nrows() });
        }
        if z.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(KsnrError::NonFinite("posterior update data"));
        }
        let zf = to_faer(z);
        let yf = to_faer(y);
        self.precision += &zf * zf.transpose();
        self.moment += &yf * zf.transpose();
        let factor = SpdFactor::new(self.precision.as_ref(), false, "posterior precision")?;
        self.chol = factor.lower().to_owned();
        self.logdet_current = factor.log_det();
        self.pairs += z.ncols();
        for c in z.column_iter() {
            self.feature_bound = self.feature_bound.max(c.norm());
        }
        Ok(())
    }

    /// Draw `M̂′`: each row is `mean_row + √ι · L⁻ᵀ g` with `P = L Lᵀ`,
    /// so rows have covariance `ι P⁻¹`.
    pub fn sample<R: Rng + ?Sized>(&self, iota: f64, rng: &mut R) -> Result<DMatrix<f64>> {
        if !(iota >= 0.0) || !iota.is_finite() {
            return Err(KsnrError::InvalidParameter(format!("iota must be >= 0, got {iota}")));
        }
        let mean = self.mean_faer();
        if iota == 0.0 {
            return Ok(from_faer(mean.as_ref()));
        }
        let d = self.input_dim();
        let mut g = Mat::from_fn(d, self.d_phi, |_, _| 0.0);
        // Fill row by row of M̂′ so the draw order is independent of storage.
        for r in 0..self.d_phi {
            for i in 0..d {
                g[(i, r)] = StandardNormal.sample(rng);
            }
        }
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(self.chol.transpose(), g.as_mut(), Par::Seq);
        let s = iota.sqrt();
        Ok(DMatrix::from_fn(self.d_phi, d, |r, i| mean[(r, i)] + s * g[(i, r)]))
    }

    /// Binary checkpoint: a JSON header line, then the mean and precision as
    /// little-endian `f64` in row-major order.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            d_phi: self.d_phi,
            d_zeta: self.d_zeta,
            lambda: self.lambda,
            noise_sigma2: self.noise_sigma2,
            pairs: self.pairs,
            feature_bound: self.feature_bound,
        };
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        let mean = self.mean_faer();
        let d = self.input_dim();
        for r in 0..self.d_phi {
            for i in 0..d {
                w.write_all(&mean[(r, i)].to_le_bytes())?;
            }
        }
        for i in 0..d {
            for j in 0..d {
                w.write_all(&self.precision[(i, j)].to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| KsnrError::Parse("missing checkpoint header".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..nl])?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(KsnrError::Parse(format!("unknown checkpoint format `{}`", header.format)));
        }
        let mut post = Self::new(header.d_phi, header.d_zeta, header.lambda, header.noise_sigma2)?;
        let d = post.input_dim();
        let mut body = &bytes[nl + 1..];
        if body.len() != 8 * (post.d_phi * d + d * d) {
            return Err(KsnrError::Parse("checkpoint body has the wrong length".into()));
        }
        let mut next = || -> Result<f64> {
            let mut buf = [0u8; 8];
            body.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        };
        let mut mean = Mat::zeros(post.d_phi, d);
        for r in 0..post.d_phi {
            for i in 0..d {
                mean[(r, i)] = next()?;
            }
        }
        for i in 0..d {
            for j in 0..d {
                post.precision[(i, j)] = next()?;
            }
        }
        let factor = SpdFactor::new(post.precision.as_ref(), false, "checkpoint precision")?;
        post.chol = factor.lower().to_owned();
        post.logdet_current = factor.log_det();
        post.moment = &mean * &post.precision;
        post.pairs = header.pairs;
        post.feature_bound = header.feature_bound;
        Ok(post)
    }
}

const CHECKPOINT_FORMAT: &str = "ksnr-posterior-v1";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    d_phi: usize,
    d_zeta: usize,
    lambda: f64,
    noise_sigma2: f64,
    pairs: usize,
    feature_bound: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Functional form of [`Posterior::update`].
pub fn posterior_update(mut post: Posterior, z: &[f64], y: &[f64]) -> Result<Posterior> {
    post.update(z, y)?;
    Ok(post)
}

pub fn sample_model<R: Rng + ?Sized>(post: &Posterior, iota: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    post.sample(iota, rng)
}

/// `𝒦(ζ)`, whose column `i` is `Mp[:, i·d_ζ .. (i+1)·d_ζ] · ζ`, so that
/// `𝒦(ζ)·φ = Mp · (φ ⊗ ζ)`.
pub fn koopman_from_model(mp: &DMatrix<f64>, zeta: &[f64]) -> Result<DMatrix<f64>> {
    let dz = zeta.len();
    let d_phi = mp.nrows();
    if dz == 0 || mp.ncols() != d_phi * dz {
        return Err(KsnrError::DimensionMismatch { context: "koopman_from_model columns", expected: d_phi * dz, actual: mp.ncols() });
    }
    let mut k = DMatrix::zeros(d_phi, d_phi);
    for i in 0..d_phi {
        for (j, &zj) in zeta.iter().enumerate() {
            if zj != 0.0 {
                k.column_mut(i).axpy(zj, &mp.column(i * dz + j), 1.0);
            }
        }
    }
    Ok(k)
}

/// `20 σ² (d_φ + log t + logdet_ratio)`.
pub fn beta_radius(t: usize, sigma2: f64, d_phi: usize, logdet_ratio: f64) -> Result<f64> {
    if t < 1 {
        return Err(KsnrError::InvalidParameter("beta_radius needs t >= 1".into()));
    }
    Ok(20.0 * sigma2 * (d_phi as f64 + (t as f64).ln() + logdet_ratio))
}

/// `2 (log det P − log det λI)`.
pub fn info_gain(post: &Posterior) -> f64 {
    2.0 * post.logdet_ratio()
}

/// `dim · log(1 + n B² / λ)`: the logarithmic information-gain growth for
/// `n` inputs of norm at most `B` in dimension `dim`.
pub fn info_gain_log_bound(dim: usize, n: usize, feature_bound: f64, lambda: f64) -> f64 {
    dim as f64 * (1.0 + n as f64 * feature_bound * feature_bound / lambda).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub t: usize,
    pub theta: Vec<f64>,
    /// `Λ[𝒦̂(Θᵗ)]` under the sampled model.
    pub spectrum_cost_est: f64,
    /// Spectrum cost of a ridge refit on the episode's real trajectories.
    pub spectrum_cost_measured: f64,
    pub cumulative_cost: f64,
    pub info_gain: f64,
    pub beta_t: f64,
    pub pairs: usize,
}

impl EpisodeRecord {
    /// Measured spectrum cost plus cumulative cost.
    pub fn realized_objective(&self) -> f64 {
        self.spectrum_cost_measured + self.cumulative_cost
    }
}

/// Running sum of `realized − baseline`.
pub fn empirical_regret(records: &[EpisodeRecord], baseline: &[f64]) -> Result<Vec<f64>> {
    if records.len() != baseline.len() {
        return Err(KsnrError::DimensionMismatch { context: "regret baseline", expected: records.len(), actual: baseline.len() });
    }
    let mut acc = 0.0;
    Ok(records
        .iter()
        .zip(baseline)
        .map(|(r, b)| {
            acc += r.realized_objective() - b;
            acc
        })
        .collect())
}

/// Columns `t,spectrum_cost_est,spectrum_cost_measured,cumulative_cost,info_gain,beta_t,regret`.
pub fn write_episodes_csv<W: Write>(records: &[EpisodeRecord], regret: &[f64], w: &mut W) -> Result<()> {
    writeln!(w, "t,spectrum_cost_est,spectrum_cost_measured,cumulative_cost,info_gain,beta_t,regret")?;
    for (k, r) in records.iter().enumerate() {
        let reg = regret.get(k).map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.t, r.spectrum_cost_est, r.spectrum_cost_measured, r.cumulative_cost, r.info_gain, r.beta_t, reg
        )?;
    }
    Ok(())
}

/// How the model predicts a rollout from `φ(x₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRollout {
    /// `φ̂_{h+1} = 𝒦̂(Θ) φ̂_h`.
    Linear,
    /// `φ̂_{h+1} = 𝒦̂(Θ) φ(x̂_h)`, where `x̂_h` is the observation block of `φ̂_h`.
    #[default]
    Relift,
}

/// Everything an episode needs besides the posterior.
#[derive(Debug, Clone)]
pub struct KsLc3Spec {
    pub env_kind: EnvKind,
    pub policy: PolicyTemplate,
    /// Observation features; the raw observation must be its linear prefix.
    pub phi: Arc<FeatureMap>,
    /// Parameter features `ζ(Θ)`.
    pub zeta: Arc<FeatureMap>,
    pub spectrum: SpectrumCostSpec,
    pub step_cost: StepCostSpec,
    pub horizon: usize,
    pub rollout: ModelRollout,
    pub iota: f64,
    pub cem: CemConfig,
    /// Ridge of the refit that measures the realized spectrum cost.
    pub measure_ridge: f64,
}

impl KsLc3Spec {
    pub fn validate(&self, post: &Posterior) -> Result<()> {
        let obs = self.env_kind.obs_dim();
        if !self.phi.linear_prefix || self.phi.input_dim != obs {
            return Err(KsnrError::InvalidParameter("phi must carry the raw observation as its linear prefix".into()));
        }
        if self.zeta.input_dim != self.policy.param_dim() {
            return Err(KsnrError::DimensionMismatch { context: "zeta input", expected: self.policy.param_dim(), actual: self.zeta.input_dim });
        }
        if post.d_phi() != self.phi.output_dim() || post.d_zeta() != self.zeta.output_dim() {
            return Err(KsnrError::DimensionMismatch { context: "posterior dims", expected: self.phi.output_dim(), actual: post.d_phi() });
        }
        if self.cem.dim() != self.policy.param_dim() {
            return Err(KsnrError::DimensionMismatch { context: "CEM dimension", expected: self.policy.param_dim(), actual: self.cem.dim() });
        }
        self.step_cost.check_layout(obs)?;
        self.spectrum.validate(self.phi.output_dim())
    }
}

/// Components of the model-predicted objective for one `Θ`.
#[derive(Debug, Clone)]
pub struct ModelEvaluation {
    pub koopman: DMatrix<f64>,
    pub spectrum_cost: f64,
    pub cumulative_cost: f64,
    pub penalty: f64,
}

/// Predicted objective under model `mp`: spectrum cost of `𝒦̂(Θ)` plus the
/// step costs read from the observation block of the predicted features.
pub fn model_objective(spec: &KsLc3Spec, mp: &DMatrix<f64>, theta: &[f64], init_features: &[Vec<f64>]) -> Result<ModelEvaluation> {
    let zeta = spec.zeta.featurize(theta)?;
    let koopman = koopman_from_model(mp, &zeta)?;
    let spectrum_cost = eval_spectrum_cost(&spec.spectrum, &koopman)?;
    let obs_dim = spec.env_kind.obs_dim();
    let d = koopman.nrows();
    let mut cumulative_cost = 0.0;
    let mut cur = nalgebra::DVector::zeros(d);
    let mut next = nalgebra::DVector::zeros(d);
    for f0 in init_features {
        cur.copy_from_slice(f0);
        for _ in 0..spec.horizon {
            cumulative_cost += spec.step_cost.eval(&cur.as_slice()[..obs_dim])?;
            next.gemv(1.0, &koopman, &cur, 0.0);
            std::mem::swap(&mut cur, &mut next);
            if spec.rollout == ModelRollout::Relift {
                let lifted = spec.phi.featurize(&cur.as_slice()[..obs_dim])?;
                cur.copy_from_slice(&lifted);
            }
        }
    }
    if !cumulative_cost.is_finite() {
        return Err(KsnrError::NonFinite("model rollout cost"));
    }
    Ok(ModelEvaluation { koopman, spectrum_cost, cumulative_cost, penalty: spec.policy.penalty(theta) })
}

struct ModelCemObjective<'a> {
    spec: &'a KsLc3Spec,
    mp: &'a DMatrix<f64>,
    init_features: Vec<Vec<f64>>,
}

impl CemObjective for ModelCemObjective<'_> {
    fn evaluate(&self, theta: &[f64]) -> f64 {
        match model_objective(self.spec, self.mp, theta, &self.init_features) {
            Ok(e) => e.spectrum_cost + e.cumulative_cost + e.penalty,
            Err(err) => {
                log::warn!("model objective failed: {err}");
                f64::INFINITY
            }
        }
    }
}

/// Regression inputs and targets of real trajectories under `ζ`.
pub fn transition_data(trajs: &[Trajectory], phi: &FeatureMap, zeta: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let pairs = assemble_pairs(trajs, phi)?;
    let n = pairs.len();
    let mut z = DMatrix::zeros(phi.output_dim() * zeta.len(), n);
    for c in 0..n {
        z.column_mut(c).copy_from_slice(&kron_feature(pairs.x.column(c).as_slice(), zeta));
    }
    Ok((z, pairs.y))
}

/// Outcome of one episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub record: EpisodeRecord,
    pub trajectories: Vec<Trajectory>,
}

/// One Thompson-sampling episode from initial states `x0s`. The posterior
/// absorbs every real transition, also when measuring the realized spectrum
/// cost fails afterwards.
pub fn thompson_episode<R: Rng + ?Sized>(
    post: &mut Posterior,
    spec: &KsLc3Spec,
    x0s: &[EnvState],
    t: usize,
    rng: &mut R,
) -> Result<Episode> {
    spec.validate(post)?;
    if x0s.is_empty() {
        return Err(KsnrError::EmptyInput("episode initial states"));
    }
    let mp = post.sample(spec.iota, rng)?;
    let init_features = x0s.iter().map(|x| spec.phi.featurize(&x.observe())).collect::<Result<Vec<_>>>()?;
    let cem_cfg = CemConfig { seed: rng.next_u64(), ..spec.cem.clone() };
    let mut objective = ModelCemObjective { spec, mp: &mp, init_features };
    let result = cem_optimize(&mut objective, &cem_cfg)?;
    let theta = result.best_theta;
    let est = model_objective(spec, &mp, &theta, &objective.init_features)?;

    let policy = spec.policy.build(&theta)?;
    let trajectories = x0s
        .iter()
        .map(|&x0| rollout(x0, &policy, spec.horizon, &spec.step_cost))
        .collect::<Result<Vec<_>>>()?;
    let zeta = spec.zeta.featurize(&theta)?;
    let (z, y) = transition_data(&trajectories, &spec.phi, &zeta)?;
    post.update_batch(&z, &y)?;

    let refit = fit_koopman(&assemble_pairs(&trajectories, &spec.phi)?, spec.measure_ridge)?;
    let spectrum_cost_measured = eval_spectrum_cost(&spec.spectrum, &refit)?;
    let record = EpisodeRecord {
        t,
        theta,
        spectrum_cost_est: est.spectrum_cost,
        spectrum_cost_measured,
        cumulative_cost: trajectories.iter().map(Trajectory::total_cost).sum(),
        info_gain: info_gain(post),
        beta_t: beta_radius(t + 1, post.noise_sigma2(), post.d_phi(), post.logdet_ratio())?,
        pairs: post.pairs(),
    };
    Ok(Episode { record, trajectories })
}

/// Run `episodes` episodes with a fixed initial-state set, seeded
/// deterministically.
pub fn run_kslc3(post: &mut Posterior, spec: &KsLc3Spec, x0s: &[EnvState], episodes: usize, seed: u64) -> Result<Vec<Episode>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..episodes)
        .map(|t| {
            let ep = thompson_episode(post, spec, x0s, t, &mut rng)?;
            log::info!(
                "episode {t}: spectrum est {:.4} measured {:.4}, cumulative {:.4}",
                ep.record.spectrum_cost_est,
                ep.record.spectrum_cost_measured,
                ep.record.cumulative_cost
            );
            Ok(ep)
        })
        .collect()
}
