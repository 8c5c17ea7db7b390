//! Dense non-symmetric eigendecomposition and the scalar functionals of a
//! spectrum: spectral radius, eigenvalue-modulus sums, dominant modes and the
//! Hölder constants of the spectral-radius cost.
//!
//! Eigenvalues are always reported sorted by modulus (descending), ties broken
//! by real part and then imaginary part (both descending), so every consumer
//! sees the same order for identical input.

use std::cmp::Ordering;
use std::ops::Range;

use faer::{c64, Mat};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KsnrError, Result};
use crate::linalg::{frobenius_norm, to_faer};

/// Relative residual accepted for an eigenpair: `‖Av − λv‖ ≤ tol·‖A‖·‖v‖`.
pub const EIG_RESIDUAL_TOL: f64 = 1e-8;
/// Relative gap below which the two largest moduli count as tied.
pub const TOP_MODE_TIE_TOL: f64 = 1e-9;
/// Eigenvector-matrix condition number above which a spectrum is treated as defective.
pub const DEFECTIVE_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm right eigenvectors aligned with `eigenvalues`; empty when
    /// only eigenvalues were computed.
    pub right_eigenvectors: Vec<DVector<Complex64>>,
    pub is_complete: bool,
}

impl EigenDecomposition {
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |l| l.norm())
    }

    pub fn abs_sum(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderConstants {
    /// Condition number of the (unit-column) eigenvector matrix.
    pub kappa: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub alpha: f64,
    /// Largest Jordan block order; `None` when the spectrum looks defective
    /// and the order could not be estimated.
    pub jordan_block_order_m: Option<usize>,
    pub near_defective: bool,
}

pub(crate) fn check_square(a: &DMatrix<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(KsnrError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(KsnrError::NonFinite("square matrix"));
    }
    Ok(a.nrows())
}

fn eig_order(a: &Complex64, b: &Complex64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then_with(|| b.re.total_cmp(&a.re))
        .then_with(|| b.im.total_cmp(&a.im))
}

fn convert(z: c64) -> Complex64 {
    Complex64::new(z.re, z.im)
}

/// Eigenvalues only, sorted. Cheaper than [`eig_general`].
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = check_square(a)?;
    let mut vals: Vec<Complex64> = to_faer(a)
        .eigenvalues()
        .map_err(|_| KsnrError::EigenNoConvergence { dim: n, norm: frobenius_norm(a) })?
        .into_iter()
        .map(convert)
        .collect();
    vals.sort_by(eig_order);
    Ok(vals)
}

/// Full eigendecomposition with unit-norm right eigenvectors.
///
/// Every returned pair is checked against [`EIG_RESIDUAL_TOL`]; if any pair
/// fails the check the decomposition is marked incomplete.
pub fn eig_general(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = check_square(a)?;
    let norm = frobenius_norm(a);
    let evd = to_faer(a)
        .eigen()
        .map_err(|_| KsnrError::EigenNoConvergence { dim: n, norm })?;
    let s = evd.S().column_vector();
    let u = evd.U();

    let mut pairs: Vec<(Complex64, DVector<Complex64>)> = (0..n)
        .map(|k| {
            let mut v = DVector::from_fn(n, |i, _| convert(u[(i, k)]));
            let vn = v.norm();
            if vn > 0.0 {
                v /= Complex64::new(vn, 0.0);
            }
            (convert(s[k]), v)
        })
        .collect();
    pairs.sort_by(|x, y| eig_order(&x.0, &y.0));

    let ac = a.map(|x| Complex64::new(x, 0.0));
    let is_complete = pairs.iter().all(|(l, v)| {
        let r = &ac * v - v * *l;
        r.norm() <= EIG_RESIDUAL_TOL * norm.max(f64::MIN_POSITIVE) * v.norm() && v.norm() > 0.0
    });
    if !is_complete {
        log::warn!("eigenpair residual check failed for {n}x{n} matrix; vectors marked incomplete");
    }
    let (eigenvalues, right_eigenvectors) = pairs.into_iter().unzip();
    Ok(EigenDecomposition { eigenvalues, right_eigenvectors, is_complete })
}

pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.first().map_or(0.0, |l| l.norm()))
}

pub fn abs_eig_sum(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.norm()).sum())
}

/// Scale `v` to unit norm and rotate its phase so that the entry of largest
/// modulus (first one on ties) is real and positive.
pub fn canonicalize_phase(v: &DVector<Complex64>) -> DVector<Complex64> {
    let n = v.norm();
    if n == 0.0 {
        return v.clone();
    }
    let mut k = 0;
    let mut best = -1.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best {
            best = m;
            k = i;
        }
    }
    let pivot = v[k];
    let rot = pivot.conj() / (pivot.norm() * n);
    v.map(|z| z * rot)
}

/// Canonical top mode of an existing decomposition.
pub fn top_mode_of(eig: &EigenDecomposition) -> Result<DVector<Complex64>> {
    if !eig.is_complete || eig.right_eigenvectors.is_empty() {
        return Err(KsnrError::IncompleteDecomposition);
    }
    if eig.eigenvalues.len() > 1 {
        let first = eig.eigenvalues[0].norm();
        let second = eig.eigenvalues[1].norm();
        if first - second <= TOP_MODE_TIE_TOL * first {
            return Err(KsnrError::DegenerateSpectrum { first, second });
        }
    }
    Ok(canonicalize_phase(&eig.right_eigenvectors[0]))
}

/// Right eigenvector of the largest-modulus eigenvalue, in canonical phase.
pub fn top_mode(a: &DMatrix<f64>) -> Result<DVector<Complex64>> {
    top_mode_of(&eig_general(a)?)
}

/// Squared Frobenius norm of `(A − B)[rows, :]`.
pub fn hs_distance_rows(a: &DMatrix<f64>, b: &DMatrix<f64>, rows: Range<usize>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(KsnrError::DimensionMismatch {
            context: "hs_distance_rows",
            expected: a.nrows() * a.ncols(),
            actual: b.nrows() * b.ncols(),
        });
    }
    if rows.start > rows.end || rows.end > a.nrows() {
        return Err(KsnrError::InvalidParameter(format!(
            "row range {rows:?} out of bounds for {} rows",
            a.nrows()
        )));
    }
    let mut acc = 0.0;
    for i in rows {
        for j in 0..a.ncols() {
            let d = a[(i, j)] - b[(i, j)];
            acc += d * d;
        }
    }
    Ok(acc)
}

/// Hölder constants of the spectral-radius cost: `L = (1+κ)d²(1+√(d−1))`, `α = 1/m`.
///
/// κ is the condition number of the unit-column eigenvector matrix, which
/// bounds the Jordan condition number from above for diagonalizable input.
/// Near-defective spectra are flagged; their Jordan order is left unestimated
/// and `α` falls back to the worst case `1/d`.
pub fn holder_constants(a: &DMatrix<f64>) -> Result<HolderConstants> {
    let eig = eig_general(a)?;
    let d = a.nrows();
    let df = d as f64;
    let v = Mat::<c64>::from_fn(d, d, |i, j| {
        let z = eig.right_eigenvectors[j][i];
        c64::new(z.re, z.im)
    });
    let sv = v
        .singular_values()
        .map_err(|_| KsnrError::EigenNoConvergence { dim: d, norm: frobenius_norm(a) })?;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let kappa = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let near_defective = !eig.is_complete || !(kappa <= DEFECTIVE_CONDITION);
    if near_defective {
        log::warn!("eigenvector matrix condition {kappa:.3e}: spectrum treated as defective");
    }
    let (m, alpha) = if near_defective { (None, 1.0 / df) } else { (Some(1), 1.0) };
    let l = (1.0 + kappa) * df * df * (1.0 + (df - 1.0).sqrt());
    Ok(HolderConstants { kappa, l, alpha, jordan_block_order_m: m, near_defective })
}
