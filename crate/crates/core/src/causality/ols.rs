//! Ordinary least squares via Householder QR.

use nalgebra::{DMatrix, DVector};

use super::CausalError;

/// Relative size of a QR diagonal entry, against its column norm, below which
/// the column is treated as collinear.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
}

/// Least-squares fit of `target` on the columns of `design` (include an
/// intercept column explicitly if wanted).
pub fn ols_fit(design: &DMatrix<f64>, target: &[f64]) -> Result<OlsFit, CausalError> {
    let (rows, cols) = design.shape();
    if rows != target.len() {
        return Err(CausalError::Misaligned { left: rows, right: target.len() });
    }
    if rows < cols || cols == 0 {
        return Err(CausalError::TooFewRows { rows, cols });
    }
    let qr = design.clone().qr();
    let r = qr.r();
    for j in 0..cols {
        let norm = design.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            return Err(CausalError::RankDeficient { column: j });
        }
    }
    let mut qtb = DVector::from_column_slice(target);
    qr.q_tr_mul(&mut qtb);
    let top = qtb.rows(0, cols).into_owned();
    let beta = r.solve_upper_triangular(&top).ok_or(CausalError::RankDeficient { column: cols - 1 })?;
    let fitted = design * &beta;
    let residuals: Vec<f64> = target.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
    let rss = residuals.iter().map(|e| e * e).sum();
    Ok(OlsFit { coefficients: beta.iter().copied().collect(), residuals, rss })
}

/// Design matrix whose first column is the intercept followed by `columns`.
pub fn design_with_intercept(rows: usize, columns: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, columns.len() + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] })
}
