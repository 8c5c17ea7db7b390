//! Koopman matrix estimation from feature transition pairs.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::envs::Trajectory;
use crate::error::{KsnrError, Result};
use crate::features::FeatureMap;
use crate::linalg::ridge_regression;
use crate::spectral::{self, EigenDecomposition};

/// Default ridge of the Koopman fit.
pub const DEFAULT_RIDGE: f64 = 1.0;

/// Column-aligned predecessor/successor features.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrixPair {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl TransitionMatrixPair {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(KsnrError::DimensionMismatch { context: "transition pair", expected: x.ncols(), actual: y.ncols() });
        }
        if x.ncols() == 0 {
            return Err(KsnrError::EmptyInput("transition pairs"));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }
}

/// One column pair per consecutive observation pair, in trajectory order and
/// then time order.
pub fn assemble_pairs(trajectories: &[Trajectory], map: &FeatureMap) -> Result<TransitionMatrixPair> {
    if trajectories.is_empty() {
        return Err(KsnrError::EmptyInput("trajectories"));
    }
    if let Some(t) = trajectories.iter().find(|t| t.observations.len() < 2) {
        return Err(KsnrError::InvalidParameter(format!(
            "trajectory needs at least 2 observations, got {}",
            t.observations.len()
        )));
    }
    let n: usize = trajectories.iter().map(|t| t.observations.len() - 1).sum();
    let d = map.output_dim();
    let mut x = DMatrix::zeros(d, n);
    let mut y = DMatrix::zeros(d, n);
    let mut col = 0;
    let mut prev = vec![0.0; d];
    let mut next = vec![0.0; d];
    for t in trajectories {
        map.featurize_into(&t.observations[0], &mut prev)?;
        for obs in &t.observations[1..] {
            map.featurize_into(obs, &mut next)?;
            x.column_mut(col).copy_from_slice(&prev);
            y.column_mut(col).copy_from_slice(&next);
            std::mem::swap(&mut prev, &mut next);
            col += 1;
        }
    }
    TransitionMatrixPair::new(x, y)
}

/// `A = Y Xᵀ (X Xᵀ + ridge·I)⁻¹`, solved by Cholesky (no explicit inverse).
pub fn fit_koopman(pairs: &TransitionMatrixPair, ridge: f64) -> Result<DMatrix<f64>> {
    ridge_regression(&pairs.x, &pairs.y, ridge)
}

/// A fitted Koopman matrix with its cached eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanEstimate {
    pub matrix: DMatrix<f64>,
    pub eig: EigenDecomposition,
}

impl KoopmanEstimate {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let eig = spectral::eig_general(&matrix)?;
        Ok(Self { matrix, eig })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eig.spectral_radius()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write_matrix_csv(&self.matrix, w)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::new(read_matrix_csv(f)?)
    }
}

/// Row-major CSV: a `d_phi,<d>` header line, then `d` rows of `d` values.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, w: &mut W) -> Result<()> {
    writeln!(w, "d_phi,{}", m.nrows())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv<R: BufRead>(r: R) -> Result<DMatrix<f64>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| KsnrError::Parse("missing header".into()))??;
    let d: usize = header
        .strip_prefix("d_phi,")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| KsnrError::Parse(format!("bad header `{header}`")))?;
    let mut data = Vec::with_capacity(d * d);
    for line in lines.take(d) {
        for tok in line?.split(',') {
            data.push(tok.trim().parse::<f64>().map_err(|e| KsnrError::Parse(e.to_string()))?);
        }
    }
    if data.len() != d * d {
        return Err(KsnrError::Parse(format!("expected {} entries, got {}", d * d, data.len())));
    }
    Ok(DMatrix::from_row_slice(d, d, &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvState;

    fn scalar_traj(values: &[f64]) -> Trajectory {
        Trajectory {
            states: values.iter().map(|&r| EnvState::LimitCycle { r, theta: 0.0 }).collect(),
            observations: values.iter().map(|&v| vec![v]).collect(),
            actions: vec![vec![0.0, 0.0]; values.len() - 1],
            step_costs: vec![0.0; values.len() - 1],
        }
    }

    fn identity_map() -> FeatureMap {
        FeatureMap {
            input_dim: 1,
            rff_dim: 0,
            bandwidth: 1.0,
            linear_prefix: true,
            seed: 0,
            frequencies: vec![],
            offsets: vec![],
        }
    }

    #[test]
    fn pair_counts_and_layout() {
        let map = identity_map();
        let p = assemble_pairs(&[scalar_traj(&[1.0, 2.0, 3.0])], &map).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.x.as_slice(), &[1.0, 2.0]);
        assert_eq!(p.y.as_slice(), &[2.0, 3.0]);
        let p = assemble_pairs(&[scalar_traj(&[1.0; 5]), scalar_traj(&[1.0; 8])], &map).unwrap();
        assert_eq!(p.len(), 4 + 7);
    }

    #[test]
    fn pair_errors() {
        let map = identity_map();
        assert!(assemble_pairs(&[], &map).is_err());
        assert!(assemble_pairs(&[scalar_traj(&[1.0])], &map).is_err());
    }

    #[test]
    fn identity_data_halves() {
        let i = DMatrix::<f64>::identity(4, 4);
        let a = fit_koopman(&TransitionMatrixPair::new(i.clone(), i.clone()).unwrap(), 1.0).unwrap();
        assert!((a - i * 0.5).abs().max() < 1e-14);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, -1.0 / 3.0, 2.5e-17, 7.0]);
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("d_phi,2\n"));
        assert_eq!(read_matrix_csv(&buf[..]).unwrap(), m);
    }
}
