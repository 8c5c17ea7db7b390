//! Koopman spectrum costs and single-step costs.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KsnrError, Result};
use crate::spectral::{self, canonicalize_phase, check_square, hs_distance_rows, top_mode_of, EigenDecomposition};

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumTerm {
    /// `max(1, ρ(A))`.
    StabilityRadius,
    /// `Σ_i |λ_i(A)|`.
    AbsEigSum,
    /// `Σ_i |m_i − m*_i|` between canonical top modes.
    ModeL1 { target: DVector<Complex64> },
    /// `‖A − A*‖²_HS`.
    HsImitation { target: DMatrix<f64> },
    /// `‖A[rows, :] − A*[rows, :]‖²_HS`.
    RowsHsImitation { target: DMatrix<f64>, rows: Range<usize> },
}

impl SpectrumTerm {
    pub fn name(&self) -> &'static str {
        match self {
            SpectrumTerm::StabilityRadius => "stability_radius",
            SpectrumTerm::AbsEigSum => "abs_eig_sum",
            SpectrumTerm::ModeL1 { .. } => "mode_l1",
            SpectrumTerm::HsImitation { .. } => "hs_imitation",
            SpectrumTerm::RowsHsImitation { .. } => "rows_hs_imitation",
        }
    }

    fn needs_eigenvalues(&self) -> bool {
        matches!(self, SpectrumTerm::StabilityRadius | SpectrumTerm::AbsEigSum)
    }

    fn needs_vectors(&self) -> bool {
        matches!(self, SpectrumTerm::ModeL1 { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTerm {
    pub weight: f64,
    pub term: SpectrumTerm,
}

/// Weighted composite `Λ(A) = Σ weight·term(A)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumCostSpec {
    pub terms: Vec<WeightedTerm>,
}

impl SpectrumCostSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, weight: f64, term: SpectrumTerm) -> Self {
        self.terms.push(WeightedTerm { weight, term });
        self
    }

    /// Check weights and payload dimensions against `d_phi`.
    pub fn validate(&self, d_phi: usize) -> Result<()> {
        for t in &self.terms {
            if !(t.weight >= 0.0) || !t.weight.is_finite() {
                return Err(KsnrError::InvalidParameter(format!("weight of {} must be >= 0", t.term.name())));
            }
            let bad = match &t.term {
                SpectrumTerm::ModeL1 { target } => target.len() != d_phi,
                SpectrumTerm::HsImitation { target } => target.shape() != (d_phi, d_phi),
                SpectrumTerm::RowsHsImitation { target, rows } => {
                    target.shape() != (d_phi, d_phi) || rows.end > d_phi || rows.start > rows.end
                }
                _ => false,
            };
            if bad {
                return Err(KsnrError::DimensionMismatch {
                    context: "spectrum cost payload",
                    expected: d_phi,
                    actual: match &t.term {
                        SpectrumTerm::ModeL1 { target } => target.len(),
                        SpectrumTerm::HsImitation { target } | SpectrumTerm::RowsHsImitation { target, .. } => target.nrows(),
                        _ => 0,
                    },
                });
            }
        }
        Ok(())
    }

    /// Unweighted value of every term, in order. Zero-weight terms are not
    /// evaluated and report `0.0`.
    pub fn eval_terms(&self, a: &DMatrix<f64>) -> Result<Vec<f64>> {
        let d = check_square(a)?;
        self.validate(d)?;
        let active = |t: &&WeightedTerm| t.weight != 0.0;
        let want_vectors = self.terms.iter().filter(active).any(|t| t.term.needs_vectors());
        let want_values = self.terms.iter().filter(active).any(|t| t.term.needs_eigenvalues());

        let eig: Option<EigenDecomposition> = if want_vectors {
            Some(spectral::eig_general(a)?)
        } else if want_values {
            Some(EigenDecomposition {
                eigenvalues: spectral::eigenvalues(a)?,
                right_eigenvectors: Vec::new(),
                is_complete: false,
            })
        } else {
            None
        };

        self.terms
            .iter()
            .map(|t| {
                if t.weight == 0.0 {
                    return Ok(0.0);
                }
                match &t.term {
                    SpectrumTerm::StabilityRadius => Ok(eig.as_ref().expect("eigenvalues").spectral_radius().max(1.0)),
                    SpectrumTerm::AbsEigSum => Ok(eig.as_ref().expect("eigenvalues").abs_sum()),
                    SpectrumTerm::ModeL1 { target } => {
                        let m = top_mode_of(eig.as_ref().expect("eigenvectors"))?;
                        Ok(mode_l1_distance(&m, target))
                    }
                    SpectrumTerm::HsImitation { target } => hs_distance_rows(a, target, 0..d),
                    SpectrumTerm::RowsHsImitation { target, rows } => hs_distance_rows(a, target, rows.clone()),
                }
            })
            .collect()
    }
}

/// `Σ_i |m_i − m*_i|` after bringing both vectors to canonical phase.
pub fn mode_l1_distance(m: &DVector<Complex64>, target: &DVector<Complex64>) -> f64 {
    let a = canonicalize_phase(m);
    let b = canonicalize_phase(target);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).sum()
}

/// `Λ(A)` for a composite spectrum cost.
pub fn eval_spectrum_cost(spec: &SpectrumCostSpec, a: &DMatrix<f64>) -> Result<f64> {
    let values = spec.eval_terms(a)?;
    Ok(spec.terms.iter().zip(values).map(|(t, v)| t.weight * v).sum())
}

/// Single-step cost `c(x)` on an observation. Cart-pole variants read the
/// layout `(p, v, θ, ω)`; the pole counts as fallen when `cos θ < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepCostSpec {
    None,
    /// `−scale·|v| + fall_penalty·[fallen]`.
    NegVelocityReward { scale: f64, fall_penalty: f64 },
    /// `scale·(|v| − target)² + fall_penalty·[fallen]`.
    VelocityTarget { scale: f64, target: f64, fall_penalty: f64 },
    /// `scale·(v − target)² + fall_penalty·[fallen]`.
    SignedVelocityTarget { scale: f64, target: f64, fall_penalty: f64 },
    /// `scale·(p − target)² + fall_penalty·[fallen]`.
    PositionTarget { scale: f64, target: f64, fall_penalty: f64 },
    /// Walker reward; its environment is not provided.
    NegWalkerReward,
}

const CARTPOLE_OBS_DIM: usize = 4;

impl StepCostSpec {
    pub fn check_layout(&self, obs_dim: usize) -> Result<()> {
        match self {
            StepCostSpec::None => Ok(()),
            StepCostSpec::NegWalkerReward => Err(KsnrError::Unsupported("walker reward has no environment")),
            _ if obs_dim != CARTPOLE_OBS_DIM => Err(KsnrError::DimensionMismatch {
                context: "step cost observation layout",
                expected: CARTPOLE_OBS_DIM,
                actual: obs_dim,
            }),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, obs: &[f64]) -> Result<f64> {
        self.check_layout(obs.len())?;
        let fallen = || if obs[2].cos() < 0.0 { 1.0 } else { 0.0 };
        Ok(match *self {
            StepCostSpec::None => 0.0,
            StepCostSpec::NegVelocityReward { scale, fall_penalty } => -scale * obs[1].abs() + fall_penalty * fallen(),
            StepCostSpec::VelocityTarget { scale, target, fall_penalty } => {
                let e = obs[1].abs() - target;
                scale * e * e + fall_penalty * fallen()
            }
            StepCostSpec::SignedVelocityTarget { scale, target, fall_penalty } => {
                let e = obs[1] - target;
                scale * e * e + fall_penalty * fallen()
            }
            StepCostSpec::PositionTarget { scale, target, fall_penalty } => {
                let e = obs[0] - target;
                scale * e * e + fall_penalty * fallen()
            }
            StepCostSpec::NegWalkerReward => unreachable!("rejected by check_layout"),
        })
    }
}

pub fn eval_step_cost(spec: &StepCostSpec, observation: &[f64]) -> Result<f64> {
    spec.eval(observation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn stability_radius_floor() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.1]));
        let spec = SpectrumCostSpec::new().with(1e4, SpectrumTerm::StabilityRadius);
        assert_eq!(eval_spectrum_cost(&spec, &a).unwrap(), 1e4);
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.5, 0.1]));
        assert!((eval_spectrum_cost(&spec, &b).unwrap() - 1.5e4).abs() < 1e-9);
    }

    #[test]
    fn mode_l1_self_is_zero() {
        let a = DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.0, 0.0, 0.5, 0.2, 0.1, 0.0, 0.3]);
        let target = spectral::top_mode(&a).unwrap();
        let spec = SpectrumCostSpec::new().with(1.0, SpectrumTerm::ModeL1 { target });
        assert!(eval_spectrum_cost(&spec, &a).unwrap() < 1e-12);
    }

    #[test]
    fn zero_weight_terms_are_skipped() {
        // A rotation has a tied top mode, which would be an error if evaluated.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let spec = SpectrumCostSpec::new().with(0.0, SpectrumTerm::ModeL1 { target: DVector::from_element(2, Complex64::new(1.0, 0.0)) });
        assert_eq!(eval_spectrum_cost(&spec, &a).unwrap(), 0.0);
        let spec = SpectrumCostSpec::new().with(1.0, SpectrumTerm::ModeL1 { target: DVector::from_element(2, Complex64::new(1.0, 0.0)) });
        assert!(matches!(eval_spectrum_cost(&spec, &a), Err(KsnrError::DegenerateSpectrum { .. })));
    }

    #[test]
    fn payload_dims_checked() {
        let a = DMatrix::<f64>::identity(3, 3);
        let spec = SpectrumCostSpec::new().with(1.0, SpectrumTerm::HsImitation { target: DMatrix::zeros(2, 2) });
        assert!(eval_spectrum_cost(&spec, &a).is_err());
        let spec = SpectrumCostSpec::new().with(-1.0, SpectrumTerm::AbsEigSum);
        assert!(eval_spectrum_cost(&spec, &a).is_err());
    }

    #[test]
    fn step_cost_examples() {
        let up = [0.0, 2.0, 0.0, 0.0];
        let c = StepCostSpec::NegVelocityReward { scale: 1e-3, fall_penalty: 1.0 };
        assert!((c.eval(&up).unwrap() + 0.002).abs() < 1e-15);
        let down = [0.0, 0.0, PI, 0.0];
        assert_eq!(c.eval(&down).unwrap(), 1.0);
        let vt = StepCostSpec::VelocityTarget { scale: 1e-4, target: 1.5, fall_penalty: 100.0 };
        assert_eq!(vt.eval(&[0.0, 1.5, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(vt.eval(&[0.0, -1.5, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(vt.eval(&[0.0, 1.5, PI, 0.0]).unwrap(), 100.0);
        let pt = StepCostSpec::PositionTarget { scale: 1.0, target: -0.3, fall_penalty: 100.0 };
        assert!((pt.eval(&[0.2, 0.0, 0.1, 0.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!(c.eval(&[1.0, 2.0, 3.0]).is_err());
        assert_eq!(StepCostSpec::None.eval(&[1.0]).unwrap(), 0.0);
        assert!(StepCostSpec::NegWalkerReward.eval(&up).is_err());
    }
}
