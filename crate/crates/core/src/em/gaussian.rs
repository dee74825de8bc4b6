//! Closed-form weighted least squares M-step for the Gaussian outcome equation.

use nalgebra::DMatrix;

use super::WeightMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, CovarianceFactor};
use crate::model::{Dataset, GaussianEqParams, ModelSpec};

/// Residual variance below this fraction of the outcome's second moment counts as zero.
const VARIANCE_RTOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct GaussianUpdate {
    pub params: GaussianEqParams,
    /// `K` rows of length `d`.
    pub support: Vec<Vec<f64>>,
    /// The residual covariance is not positive definite.
    pub degenerate_covariance: bool,
}

/// Regressors per pseudo-record: class indicators, outcome covariates, cause
/// dummies. The same design serves every outcome dimension, so the joint
/// maximizer is equation-wise weighted least squares followed by the weighted
/// residual cross-product divided by the total weight.
pub fn m_step_gaussian(dataset: &Dataset, spec: &ModelSpec, weights: &WeightMatrix) -> Result<GaussianUpdate> {
    let n = dataset.len();
    let k = weights.classes();
    if weights.rows() != n {
        return Err(Error::DimensionMismatch { context: "Gaussian M-step", expected: n, actual: weights.rows() });
    }
    let d = spec.outcome_dim;
    let idx = &spec.outcome_covariates;
    let p = idx.len();
    let q = spec.outcome_cause_count();
    let r_dim = p + q;
    let m = k + r_dim;

    // row-major upper triangle of the Gram matrix and the m x d right-hand side
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m * d];
    let mut shared = vec![0.0; r_dim];
    let mut causes = vec![0.0; q];
    for (i, rec) in dataset.records().iter().enumerate() {
        for (j, &c) in idx.iter().enumerate() {
            shared[j] = rec.x[c];
        }
        spec.outcome_causes_into(rec.z1, rec.z2, &mut causes);
        shared[p..].copy_from_slice(&causes);
        let wrow = weights.row(i);
        let wsum: f64 = wrow.iter().sum();
        for (c, &w) in wrow.iter().enumerate() {
            gram[c * m + c] += w;
            let row = &mut gram[c * m + k..c * m + m];
            for (g, v) in row.iter_mut().zip(&shared) {
                *g += w * v;
            }
            for (r, y) in rhs[c * d..(c + 1) * d].iter_mut().zip(&rec.y) {
                *r += w * y;
            }
        }
        for (j, vj) in shared.iter().enumerate() {
            let a = wsum * vj;
            let row = (k + j) * m;
            for (g, vl) in gram[row + k + j..row + m].iter_mut().zip(&shared[j..]) {
                *g += a * vl;
            }
            for (r, y) in rhs[(k + j) * d..(k + j + 1) * d].iter_mut().zip(&rec.y) {
                *r += a * y;
            }
        }
    }
    let gram = DMatrix::from_fn(m, m, |r, c| if r <= c { gram[r * m + c] } else { gram[c * m + r] });
    let rhs = DMatrix::from_row_slice(m, d, &rhs);
    let chol = match linalg::cholesky(&gram) {
        Some(c) => c,
        None => {
            let labels = dataset.labels();
            let name = |j: usize| -> String {
                if j < k {
                    format!("class[{}]", j + 1)
                } else if j < k + p {
                    let l = &labels.covariates[idx[j - k]];
                    match &l.level {
                        Some(level) => format!("{}={level}", l.variable),
                        None => l.variable.clone(),
                    }
                } else {
                    format!("cause[{}]", j - k - p)
                }
            };
            let columns = linalg::dependent_columns(&gram).into_iter().map(name).collect();
            return Err(Error::Collinear { columns });
        }
    };
    let coef = chol.solve(&rhs);

    let class_mass = weights.column_sums();
    let total: f64 = class_mass.iter().sum();
    let intercept: Vec<f64> = (0..d)
        .map(|t| (0..k).map(|c| class_mass[c] / total * coef[(c, t)]).sum())
        .collect();
    let support: Vec<Vec<f64>> = (0..k).map(|c| (0..d).map(|t| coef[(c, t)] - intercept[t]).collect()).collect();

    // weighted residual cross-products
    let coef_rows: Vec<f64> = (0..m).flat_map(|j| (0..d).map(move |t| (j, t))).map(|(j, t)| coef[(j, t)]).collect();
    let mut cross = vec![0.0; d * d];
    let mut base = vec![0.0; d];
    let mut e = vec![0.0; d];
    for (i, rec) in dataset.records().iter().enumerate() {
        for (j, &c) in idx.iter().enumerate() {
            shared[j] = rec.x[c];
        }
        spec.outcome_causes_into(rec.z1, rec.z2, &mut causes);
        shared[p..].copy_from_slice(&causes);
        base.copy_from_slice(&rec.y);
        for (j, v) in shared.iter().enumerate() {
            for (b, cf) in base.iter_mut().zip(&coef_rows[(k + j) * d..(k + j + 1) * d]) {
                *b -= cf * v;
            }
        }
        for (c, &w) in weights.row(i).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for t in 0..d {
                e[t] = base[t] - coef_rows[c * d + t];
            }
            for a in 0..d {
                for b in 0..=a {
                    cross[a * d + b] += w * e[a] * e[b];
                }
            }
        }
    }
    let covariance: Vec<Vec<f64>> = (0..d)
        .map(|a| (0..d).map(|b| if b <= a { cross[a * d + b] } else { cross[b * d + a] } / total).collect())
        .collect();
    // residual variances that vanish against the raw outcome spread mean an exact fit
    let mut moments = vec![(0.0, 0.0); d];
    for (i, rec) in dataset.records().iter().enumerate() {
        let w: f64 = weights.row(i).iter().sum();
        for (m, y) in moments.iter_mut().zip(&rec.y) {
            m.0 += w * y;
            m.1 += w * y * y;
        }
    }
    let exact = moments.iter().enumerate().any(|(t, &(s1, s2))| {
        let mean = s1 / total;
        let spread = (s2 / total - mean * mean).max(0.0) + mean * mean;
        covariance[t][t] <= VARIANCE_RTOL * spread
    });
    let degenerate_covariance = exact || CovarianceFactor::new(&linalg::from_rows(&covariance)).is_none();

    Ok(GaussianUpdate {
        params: GaussianEqParams {
            intercept,
            coefficients: (0..d).map(|t| (0..p).map(|j| coef[(k + j, t)]).collect()).collect(),
            cause_coefficients: (0..d).map(|t| (0..q).map(|j| coef[(k + p + j, t)]).collect()).collect(),
            covariance,
        },
        support,
        degenerate_covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DataRecord;

    fn line_data(x: &[f64], y: &[f64]) -> (Dataset, ModelSpec) {
        let records = x
            .iter()
            .zip(y)
            .map(|(&x, &y)| DataRecord { x: vec![x], z1: 1, z2: 0, y: vec![y] })
            .collect();
        let mut spec = ModelSpec::full(1, 2, 1, 1);
        spec.outcome_uses_ordinal = false;
        spec.outcome_uses_binary = false;
        (Dataset::with_generic_labels(records, 2).unwrap(), spec)
    }

    #[test]
    fn exact_line_gives_degenerate_covariance() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let (data, spec) = line_data(&x, &y);
        let up = m_step_gaussian(&data, &spec, &WeightMatrix::constant(5, 1, 1.0)).unwrap();
        assert!((up.params.intercept[0] - 1.0).abs() < 1e-12);
        assert!((up.params.coefficients[0][0] - 2.0).abs() < 1e-12);
        assert!(up.params.covariance[0][0].abs() < 1e-20);
        assert!(up.degenerate_covariance);
    }

    #[test]
    fn four_record_hand_solution() {
        let (data, spec) = line_data(&[0.0, 0.0, 1.0, 1.0], &[0.0, 2.0, 3.0, 5.0]);
        let up = m_step_gaussian(&data, &spec, &WeightMatrix::constant(4, 1, 1.0)).unwrap();
        assert!((up.params.intercept[0] - 1.0).abs() < 1e-12);
        assert!((up.params.coefficients[0][0] - 3.0).abs() < 1e-12);
        assert!((up.params.covariance[0][0] - 1.0).abs() < 1e-12);
        assert!(!up.degenerate_covariance);
    }

    #[test]
    fn doubling_weights_changes_nothing() {
        let (data, spec, _) = super::super::fixtures::two_class_data(200, 3);
        let n = data.len();
        let w: Vec<f64> = (0..n).flat_map(|i| {
            let a = (i % 7) as f64 / 7.0;
            [a, 1.0 - a]
        }).collect();
        let w1 = WeightMatrix::new(n, 2, w).unwrap();
        let a = m_step_gaussian(&data, &spec, &w1).unwrap();
        let b = m_step_gaussian(&data, &spec, &w1.scaled(2.0)).unwrap();
        let flat = |u: &GaussianUpdate| -> Vec<f64> {
            let g = &u.params;
            g.intercept
                .iter()
                .chain(g.coefficients.iter().flatten())
                .chain(g.cause_coefficients.iter().flatten())
                .chain(g.covariance.iter().flatten())
                .chain(u.support.iter().flatten())
                .copied()
                .collect()
        };
        for (p, q) in flat(&a).iter().zip(&flat(&b)) {
            assert!((p - q).abs() < 1e-9 * (1.0 + p.abs()), "{p} vs {q}");
        }
    }

    #[test]
    fn collinear_design_names_columns() {
        let records = (0..6)
            .map(|i| DataRecord { x: vec![i as f64, 2.0 * i as f64], z1: 1, z2: 0, y: vec![i as f64 * 0.3 + 1.0] })
            .collect();
        let data = Dataset::with_generic_labels(records, 2).unwrap();
        let mut spec = ModelSpec::full(1, 2, 2, 1);
        spec.outcome_uses_ordinal = false;
        spec.outcome_uses_binary = false;
        match m_step_gaussian(&data, &spec, &WeightMatrix::constant(6, 1, 1.0)) {
            Err(Error::Collinear { columns }) => assert_eq!(columns, vec!["x2".to_string()]),
            other => panic!("expected collinearity, got {other:?}"),
        }
    }
}
