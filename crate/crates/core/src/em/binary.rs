//! Weighted logistic M-step on the class-expanded data.

use super::newton::{maximize, Objective};
use super::patterns::{binary_cause, binary_grouping, Grouping};
use super::ordinal::mirror_upper;
use super::{FitterOutcome, InnerConfig, WeightMatrix};
use crate::error::{Error, Result};
use crate::model::{log_sigmoid, sigmoid, BinaryEqParams, Dataset, ModelSpec};

/// Parameter layout: `[c_1..c_K, beta, gamma]`.
struct BinaryObjective<'a> {
    z: Vec<u8>,
    /// Ordinal-cause dummy column hit by each record, if any.
    cause: Vec<Option<usize>>,
    x: Vec<f64>,
    p: usize,
    q: usize,
    k: usize,
    weights: &'a WeightMatrix,
}

impl Objective for BinaryObjective<'_> {
    fn dim(&self) -> usize {
        self.k + self.p + self.q
    }

    fn evaluate(&self, theta: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let dim = self.dim();
        let (k, p) = (self.k, self.p);
        let (b_off, g_off) = (k, k + p);
        let beta = &theta[b_off..g_off];
        grad.fill(0.0);
        hess.fill(0.0);
        let mut value = 0.0;
        for (i, &z) in self.z.iter().enumerate() {
            let x = &self.x[i * p..(i + 1) * p];
            let mut base: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            let gi = self.cause[i].map(|c| g_off + c);
            if let Some(g) = gi {
                base += theta[g];
            }
            let (mut g_sum, mut h_sum) = (0.0, 0.0);
            for c in 0..k {
                let w = self.weights.get(i, c);
                if w == 0.0 {
                    continue;
                }
                let eta = theta[c] + base;
                let s = sigmoid(eta);
                value += w * if z == 1 { log_sigmoid(eta) } else { log_sigmoid(-eta) };
                let g = w * (f64::from(z) - s);
                let h = -w * s * (1.0 - s);
                grad[c] += g;
                hess[c * dim + c] += h;
                for (j, xj) in x.iter().enumerate() {
                    hess[c * dim + b_off + j] += h * xj;
                }
                if let Some(gg) = gi {
                    hess[c * dim + gg] += h;
                }
                g_sum += g;
                h_sum += h;
            }
            for (j, xj) in x.iter().enumerate() {
                grad[b_off + j] += g_sum * xj;
                for (l, xl) in x.iter().enumerate().skip(j) {
                    hess[(b_off + j) * dim + b_off + l] += h_sum * xj * xl;
                }
                if let Some(gg) = gi {
                    hess[(b_off + j) * dim + gg] += h_sum * xj;
                }
            }
            if let Some(gg) = gi {
                grad[gg] += g_sum;
                hess[gg * dim + gg] += h_sum;
            }
        }
        mirror_upper(hess, dim);
        value
    }
}

#[derive(Debug, Clone)]
pub struct BinaryUpdate {
    pub params: BinaryEqParams,
    pub support: Vec<f64>,
    pub outcome: FitterOutcome,
}

/// Maximizes the weighted logistic log-likelihood over the intercept,
/// coefficients, ordinal-cause effects and class support points.
pub fn m_step_binary(
    dataset: &Dataset,
    spec: &ModelSpec,
    weights: &WeightMatrix,
    current: &BinaryEqParams,
    support: &[f64],
    inner: &InnerConfig,
) -> Result<BinaryUpdate> {
    m_step_binary_grouped(dataset, spec, &binary_grouping(dataset, spec), weights, current, support, inner)
}

pub(crate) fn m_step_binary_grouped(
    dataset: &Dataset,
    spec: &ModelSpec,
    groups: &Grouping,
    weights: &WeightMatrix,
    current: &BinaryEqParams,
    support: &[f64],
    inner: &InnerConfig,
) -> Result<BinaryUpdate> {
    let k = weights.classes();
    if weights.rows() != dataset.len() || support.len() != k {
        return Err(Error::DimensionMismatch { context: "binary M-step", expected: dataset.len(), actual: weights.rows() });
    }
    let idx = &spec.binary_covariates;
    let p = idx.len();
    let q = spec.binary_cause_count();
    let records = dataset.records();
    let pattern_weights = groups.aggregate(weights);
    let obj = BinaryObjective {
        z: groups.representative.iter().map(|&i| records[i].z2).collect(),
        cause: groups.representative.iter().map(|&i| binary_cause(spec, records[i].z1)).collect(),
        x: groups.representative.iter().flat_map(|&i| idx.iter().map(move |&c| records[i].x[c])).collect(),
        p,
        q,
        k,
        weights: &pattern_weights,
    };
    let mut start: Vec<f64> = support.iter().map(|s| current.intercept + s).collect();
    start.extend_from_slice(&current.coefficients);
    start.extend_from_slice(&current.cause_coefficients);
    let out = maximize(&obj, start, inner.max_iter, inner.tol, "binary")?;

    let class_mass = weights.column_sums();
    let total: f64 = class_mass.iter().sum();
    let intercept: f64 = (0..k).map(|c| class_mass[c] / total * out.theta[c]).sum();
    Ok(BinaryUpdate {
        params: BinaryEqParams {
            intercept,
            coefficients: out.theta[k..k + p].to_vec(),
            cause_coefficients: out.theta[k + p..].to_vec(),
        },
        support: out.theta[..k].iter().map(|c| c - intercept).collect(),
        outcome: FitterOutcome::from_newton(&out),
    })
}
