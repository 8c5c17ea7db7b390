//! Dense kernels shared by the estimators. Public types stay on `nalgebra`;
//! the heavy factorizations run through `faer`.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use nalgebra::DMatrix;

use crate::error::{KsnrError, Result};

pub(crate) fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub(crate) fn from_faer(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub(crate) struct SpdFactor {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl SpdFactor {
    /// Factor `g`. With `strict`, near-zero pivots relative to the largest
    /// diagonal entry are reported as singular instead of being accepted.
    pub(crate) fn new(g: MatRef<'_, f64>, strict: bool, context: &'static str) -> Result<Self> {
        let llt = g
            .llt(Side::Lower)
            .map_err(|_| KsnrError::SingularSystem(context))?;
        if strict {
            let n = g.nrows();
            let max_diag = (0..n).map(|i| g[(i, i)].abs()).fold(0.0_f64, f64::max);
            let l = llt.L();
            let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
            if !(min_pivot > max_diag * (n as f64) * f64::EPSILON) {
                return Err(KsnrError::SingularSystem(context));
            }
        }
        Ok(Self { llt })
    }

    pub(crate) fn lower(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    /// Solve `G X = rhs`.
    pub(crate) fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.solve(rhs)
    }

    pub(crate) fn log_det(&self) -> f64 {
        let l = self.llt.L();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

/// Ridge least squares `W = T Xᵀ (X Xᵀ + ridge I)⁻¹` for column-paired
/// inputs `X` (d×n) and targets `T` (k×n), solved through a Cholesky
/// factorization of the regularized Gram matrix.
pub fn ridge_regression(inputs: &DMatrix<f64>, targets: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    if inputs.ncols() != targets.ncols() {
        return Err(KsnrError::DimensionMismatch {
            context: "ridge_regression column count",
            expected: inputs.ncols(),
            actual: targets.ncols(),
        });
    }
    if inputs.ncols() == 0 {
        return Err(KsnrError::EmptyInput("ridge_regression"));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(KsnrError::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
    }
    let x = to_faer(inputs);
    let t = to_faer(targets);
    let mut gram = &x * x.transpose();
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let factor = SpdFactor::new(gram.as_ref(), ridge == 0.0, "ridge regression gram matrix")?;
    // G Wᵀ = X Tᵀ
    let rhs = &x * t.transpose();
    let wt = factor.solve(rhs.as_ref());
    Ok(DMatrix::from_fn(targets.nrows(), inputs.nrows(), |i, j| wt[(j, i)]))
}

pub fn frobenius_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}
