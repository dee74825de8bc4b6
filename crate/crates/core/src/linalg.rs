//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative pivot threshold below which a symmetric matrix is treated as singular.
const PIVOT_RTOL: f64 = 1e-13;

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

/// Cholesky factorization that also rejects numerically singular matrices.
pub(crate) fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    if !scale.is_finite() || scale == 0.0 {
        return None;
    }
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let ok = (0..m.nrows()).all(|i| {
        let p = l[(i, i)];
        p.is_finite() && p * p > PIVOT_RTOL * scale
    });
    ok.then_some(chol)
}

pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    cholesky(m).map(|c| c.inverse())
}

/// Solve `m x = b` for symmetric positive definite `m`, retrying once with a
/// small ridge on the diagonal.
pub(crate) fn solve_spd_with_ridge(m: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Option<DVector<f64>> {
    if let Some(c) = cholesky(m) {
        return Some(c.solve(b));
    }
    let mut r = m.clone();
    for i in 0..r.nrows() {
        r[(i, i)] += ridge;
    }
    r.cholesky().map(|c| c.solve(b))
}

/// Indices of columns of a Gram matrix that are (numerically) linear
/// combinations of earlier columns.
pub(crate) fn dependent_columns(gram: &DMatrix<f64>) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..gram.nrows() {
        let mut trial = kept.clone();
        trial.push(j);
        let sub = DMatrix::from_fn(trial.len(), trial.len(), |a, b| gram[(trial[a], trial[b])]);
        if cholesky(&sub).is_some() {
            kept.push(j);
        } else {
            dropped.push(j);
        }
    }
    dropped
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of a covariance matrix, kept in a flat buffer so the
/// per-record density evaluation does not allocate.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    dim: usize,
    lower: Vec<f64>,
    half_log_det: f64,
    inverse: Vec<f64>,
}

impl CovarianceFactor {
    pub fn new(cov: &DMatrix<f64>) -> Option<Self> {
        let chol = cholesky(cov)?;
        let dim = cov.nrows();
        let l = chol.l();
        let half_log_det = (0..dim).map(|i| l[(i, i)].ln()).sum();
        let inv = chol.inverse();
        Some(Self {
            dim,
            lower: (0..dim * dim).map(|k| l[(k / dim, k % dim)]).collect(),
            half_log_det,
            inverse: (0..dim * dim).map(|k| inv[(k / dim, k % dim)]).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Half the log-determinant of the covariance.
    pub fn half_log_det(&self) -> f64 {
        self.half_log_det
    }

    /// Row-major inverse covariance.
    pub fn inverse(&self) -> &[f64] {
        &self.inverse
    }

    /// Squared Mahalanobis norm of `resid`; `scratch` must have length `dim`.
    pub fn mahalanobis_sq(&self, resid: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let mut v = resid[i];
            for j in 0..i {
                v -= self.lower[i * d + j] * scratch[j];
            }
            v /= self.lower[i * d + i];
            scratch[i] = v;
            acc += v * v;
        }
        acc
    }

    pub fn log_density(&self, resid: &[f64], scratch: &mut [f64]) -> f64 {
        let q = self.mahalanobis_sq(resid, scratch);
        -0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI).ln() - self.half_log_det - 0.5 * q
    }
}
