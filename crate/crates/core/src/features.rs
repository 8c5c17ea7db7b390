//! Random Fourier feature maps.
//!
//! A map draws `rff_dim` frequencies `ω_k ~ N(0, bandwidth⁻² I)` and offsets
//! `b_k ~ U[0, 2π)` and evaluates `√(2/D)·cos(ω_kᵀx + b_k)`, which
//! approximates the Gaussian kernel `exp(−‖x−y‖²/(2·bandwidth²))`. With a
//! linear prefix, the raw input is copied in front of the RFF block.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{KsnrError, Result};

/// Name of the only RFF variant implemented; written into run metadata.
pub const RFF_VARIANT: &str = "cos-with-uniform-offset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub input_dim: usize,
    pub rff_dim: usize,
    pub bandwidth: f64,
    pub linear_prefix: bool,
    pub seed: u64,
    /// Row-major `rff_dim × input_dim`.
    pub frequencies: Vec<f64>,
    pub offsets: Vec<f64>,
}

/// Draw a feature map. Identical arguments always produce identical maps.
pub fn sample_rff(input_dim: usize, rff_dim: usize, bandwidth: f64, linear_prefix: bool, seed: u64) -> Result<FeatureMap> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(KsnrError::InvalidParameter(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if input_dim == 0 {
        return Err(KsnrError::InvalidParameter("input_dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / bandwidth).expect("positive std");
    let frequencies = (0..rff_dim * input_dim).map(|_| normal.sample(&mut rng)).collect();
    let offsets = (0..rff_dim).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    Ok(FeatureMap { input_dim, rff_dim, bandwidth, linear_prefix, seed, frequencies, offsets })
}

impl FeatureMap {
    pub fn output_dim(&self) -> usize {
        self.rff_dim + if self.linear_prefix { self.input_dim } else { 0 }
    }

    /// Per-coordinate bound `√(2/rff_dim)` of the RFF block.
    pub fn rff_scale(&self) -> f64 {
        if self.rff_dim == 0 {
            0.0
        } else {
            (2.0 / self.rff_dim as f64).sqrt()
        }
    }

    pub fn featurize(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        self.featurize_into(x, &mut out)?;
        Ok(out)
    }

    /// Write `φ(x)` into `out` (length [`Self::output_dim`]).
    pub fn featurize_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(KsnrError::DimensionMismatch {
                context: "featurize input",
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        if out.len() != self.output_dim() {
            return Err(KsnrError::DimensionMismatch {
                context: "featurize output",
                expected: self.output_dim(),
                actual: out.len(),
            });
        }
        let (prefix, block) = out.split_at_mut(if self.linear_prefix { self.input_dim } else { 0 });
        prefix.copy_from_slice(&x[..prefix.len()]);
        let scale = self.rff_scale();
        for (k, slot) in block.iter_mut().enumerate() {
            let row = &self.frequencies[k * self.input_dim..(k + 1) * self.input_dim];
            let proj: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
            *slot = scale * (proj + self.offsets[k]).cos();
        }
        Ok(())
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// `φ ⊗ ζ`: entry `i·dim(ζ) + j` (0-based) is `φ_i ζ_j`.
pub fn kron_feature(phi: &[f64], zeta: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phi.len() * zeta.len());
    for &p in phi {
        out.extend(zeta.iter().map(|&z| p * z));
    }
    out
}
