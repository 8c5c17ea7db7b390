//! Parameterized policies and behavior cloning.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{KsnrError, Result};
use crate::features::FeatureMap;
use crate::linalg::ridge_regression;

/// Deterministic state-feedback controller.
pub trait Policy {
    fn action_dim(&self) -> usize;
    fn act(&self, obs: &[f64]) -> Vec<f64>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }

    fn act(&self, obs: &[f64]) -> Vec<f64> {
        (**self).act(obs)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }

    fn act(&self, obs: &[f64]) -> Vec<f64> {
        (**self).act(obs)
    }
}

/// Per-dimension action bounds.
pub type ActionClip = Vec<(f64, f64)>;

pub fn clip_action(a: &mut [f64], clip: &[(f64, f64)]) {
    for (x, &(lo, hi)) in a.iter_mut().zip(clip) {
        *x = x.clamp(lo, hi);
    }
}

/// `action = clip(W·φ(obs))`; the parameter vector is `W` in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffPolicy {
    pub map: Arc<FeatureMap>,
    pub action_dim: usize,
    /// Row-major `action_dim × map.output_dim()`.
    pub weights: Vec<f64>,
    pub clip: ActionClip,
}

impl RffPolicy {
    pub fn from_params(map: Arc<FeatureMap>, action_dim: usize, theta: &[f64], clip: ActionClip) -> Result<Self> {
        let expected = action_dim * map.output_dim();
        if theta.len() != expected {
            return Err(KsnrError::DimensionMismatch { context: "RFF policy parameters", expected, actual: theta.len() });
        }
        if clip.len() != action_dim {
            return Err(KsnrError::DimensionMismatch { context: "action clip bounds", expected: action_dim, actual: clip.len() });
        }
        Ok(Self { map, action_dim, weights: theta.to_vec(), clip })
    }

    pub fn zeros(map: Arc<FeatureMap>, action_dim: usize, clip: ActionClip) -> Self {
        let n = action_dim * map.output_dim();
        Self { map, action_dim, weights: vec![0.0; n], clip }
    }

    pub fn param_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.action_dim, self.map.output_dim(), &self.weights)
    }

    fn apply(&self, feats: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(feats.len())
            .map(|row| row.iter().zip(feats).map(|(w, f)| w * f).sum())
            .collect()
    }

    /// `W·φ(obs)` before clipping.
    pub fn act_unclipped(&self, obs: &[f64]) -> Vec<f64> {
        let feats = self.map.featurize(obs).expect("observation dimension matches policy feature map");
        self.apply(&feats)
    }
}

impl Policy for RffPolicy {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn act(&self, obs: &[f64]) -> Vec<f64> {
        let mut a = self.act_unclipped(obs);
        clip_action(&mut a, &self.clip);
        a
    }
}

/// `action = clip(Σ_i weights_i · base_i(obs))` over unclipped base actions.
///
/// When every base shares one feature map the combination collapses to a
/// single weight matrix, so each step featurizes once.
#[derive(Debug, Clone)]
pub struct MixturePolicy {
    pub bases: Arc<Vec<RffPolicy>>,
    pub weights: Vec<f64>,
    pub clip: ActionClip,
    combined: Option<RffPolicy>,
}

impl MixturePolicy {
    pub fn new(bases: Arc<Vec<RffPolicy>>, weights: &[f64], clip: ActionClip) -> Result<Self> {
        let Some(first) = bases.first() else {
            return Err(KsnrError::EmptyInput("mixture bases"));
        };
        if weights.len() != bases.len() {
            return Err(KsnrError::DimensionMismatch { context: "mixture weights", expected: bases.len(), actual: weights.len() });
        }
        if bases.iter().any(|b| b.action_dim != first.action_dim) || clip.len() != first.action_dim {
            return Err(KsnrError::DimensionMismatch { context: "mixture action dims", expected: first.action_dim, actual: clip.len() });
        }
        let shared = bases.iter().all(|b| Arc::ptr_eq(&b.map, &first.map) || b.map == first.map);
        let combined = shared.then(|| {
            let mut w = vec![0.0; first.weights.len()];
            for (b, &c) in bases.iter().zip(weights) {
                for (acc, x) in w.iter_mut().zip(&b.weights) {
                    *acc += c * x;
                }
            }
            RffPolicy { map: first.map.clone(), action_dim: first.action_dim, weights: w, clip: clip.clone() }
        });
        Ok(Self { bases, weights: weights.to_vec(), clip, combined })
    }

    pub fn act_unclipped(&self, obs: &[f64]) -> Vec<f64> {
        if let Some(c) = &self.combined {
            return c.act_unclipped(obs);
        }
        let mut out = vec![0.0; self.clip.len()];
        for (b, &c) in self.bases.iter().zip(&self.weights) {
            for (acc, x) in out.iter_mut().zip(b.act_unclipped(obs)) {
                *acc += c * x;
            }
        }
        out
    }
}

impl Policy for MixturePolicy {
    fn action_dim(&self) -> usize {
        self.clip.len()
    }

    fn act(&self, obs: &[f64]) -> Vec<f64> {
        let mut a = self.act_unclipped(obs);
        clip_action(&mut a, &self.clip);
        a
    }
}

/// Amount by which `‖θ‖_∞` exceeds `bound` (zero inside the box).
pub fn linf_excess(theta: &[f64], bound: f64) -> f64 {
    let m = theta.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    (m - bound).max(0.0)
}

/// Fit `W` by ridge regression of demonstrated actions on `φ(obs)`.
pub fn clone_policy(demos: &[(Vec<f64>, Vec<f64>)], map: Arc<FeatureMap>, ridge: f64, clip: ActionClip) -> Result<RffPolicy> {
    let Some((_, a0)) = demos.first() else {
        return Err(KsnrError::EmptyInput("clone_policy demos"));
    };
    let action_dim = a0.len();
    let d = map.output_dim();
    let n = demos.len();
    let mut feats = DMatrix::zeros(d, n);
    let mut targets = DMatrix::zeros(action_dim, n);
    let mut buf = vec![0.0; d];
    for (k, (obs, act)) in demos.iter().enumerate() {
        if act.len() != action_dim {
            return Err(KsnrError::DimensionMismatch { context: "demo action", expected: action_dim, actual: act.len() });
        }
        map.featurize_into(obs, &mut buf)?;
        feats.column_mut(k).copy_from_slice(&buf);
        targets.column_mut(k).copy_from_slice(act);
    }
    let w = ridge_regression(&feats, &targets, ridge)?;
    // nalgebra is column-major, so the transpose's storage is W row-major.
    let weights: Vec<f64> = w.transpose().iter().copied().collect();
    RffPolicy::from_params(map, action_dim, &weights, clip)
}
