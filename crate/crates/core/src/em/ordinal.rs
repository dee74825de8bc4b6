//! Weighted proportional-odds M-step on the class-expanded data.

use super::newton::{maximize, Objective};
use super::patterns::{ordinal_grouping, Grouping};
use super::{FitterOutcome, InnerConfig, WeightMatrix};
use crate::error::{Error, Result};
use crate::model::ordinal_term;
use crate::model::{Dataset, ModelSpec, OrdinalEqParams};

/// Parameter layout: `[c_1..c_K, tau_2..tau_{J-1}, beta]` where `c_k` is the
/// class intercept (`intercept + support_k`).
struct OrdinalObjective<'a> {
    z: Vec<usize>,
    x: Vec<f64>,
    p: usize,
    k: usize,
    categories: usize,
    weights: &'a WeightMatrix,
}

impl OrdinalObjective<'_> {
    fn cutpoints(&self, theta: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0];
        c.extend_from_slice(&theta[self.k..self.k + self.categories - 2]);
        c
    }

    /// Free-parameter index of cutpoint `m` (1-based), if free.
    fn cut_index(&self, m: usize) -> Option<usize> {
        (m >= 2 && m < self.categories).then(|| self.k + m - 2)
    }
}

impl Objective for OrdinalObjective<'_> {
    fn dim(&self) -> usize {
        self.k + self.categories - 2 + self.p
    }

    fn feasible(&self, theta: &[f64]) -> bool {
        let c = self.cutpoints(theta);
        c.windows(2).all(|w| w[1] <= w[0])
    }

    fn project(&self, theta: &mut [f64]) {
        let mut prev = 0.0;
        for t in &mut theta[self.k..self.k + self.categories - 2] {
            *t = t.min(prev);
            prev = *t;
        }
    }

    fn evaluate(&self, theta: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let dim = self.dim();
        let (k, p) = (self.k, self.p);
        let beta_off = k + self.categories - 2;
        let beta = &theta[beta_off..];
        let cut = self.cutpoints(theta);
        grad.fill(0.0);
        hess.fill(0.0);
        let mut value = 0.0;
        let add = |h: &mut [f64], a: usize, b: usize, v: f64| {
            h[a * dim + b] += v;
        };
        for (i, &z) in self.z.iter().enumerate() {
            let x = &self.x[i * p..(i + 1) * p];
            let xb: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            let ia = self.cut_index(z - 1);
            let ib = self.cut_index(z);
            // per-record sums over classes of the eta-direction curvature terms
            let (mut g_eta, mut h_ee, mut h_ea, mut h_eb) = (0.0, 0.0, 0.0, 0.0);
            for c in 0..k {
                let w = self.weights.get(i, c);
                if w == 0.0 {
                    continue;
                }
                let t = ordinal_term(z, theta[c] + xb, &cut);
                if !t.value.is_finite() {
                    return f64::NEG_INFINITY;
                }
                value += w * t.value;
                let ge = w * (t.da + t.db);
                let hee = w * (t.daa + 2.0 * t.dab + t.dbb);
                let hea = w * (t.daa + t.dab);
                let heb = w * (t.dab + t.dbb);
                grad[c] += ge;
                add(hess, c, c, hee);
                for (j, xj) in x.iter().enumerate() {
                    add(hess, c, beta_off + j, hee * xj);
                }
                if let Some(a) = ia {
                    grad[a] += w * t.da;
                    add(hess, a, a, w * t.daa);
                    add(hess, c, a, hea);
                }
                if let Some(b) = ib {
                    grad[b] += w * t.db;
                    add(hess, b, b, w * t.dbb);
                    add(hess, c, b, heb);
                }
                if let (Some(a), Some(b)) = (ia, ib) {
                    add(hess, a, b, w * t.dab);
                }
                g_eta += ge;
                h_ee += hee;
                h_ea += hea;
                h_eb += heb;
            }
            for (j, xj) in x.iter().enumerate() {
                grad[beta_off + j] += g_eta * xj;
                for (l, xl) in x.iter().enumerate().skip(j) {
                    add(hess, beta_off + j, beta_off + l, h_ee * xj * xl);
                }
                if let Some(a) = ia {
                    add(hess, a, beta_off + j, h_ea * xj);
                }
                if let Some(b) = ib {
                    add(hess, b, beta_off + j, h_eb * xj);
                }
            }
        }
        // only the upper triangle was accumulated
        mirror_upper(hess, dim);
        value
    }
}

/// Copies the upper triangle onto the lower one.
pub(crate) fn mirror_upper(h: &mut [f64], dim: usize) {
    for r in 0..dim {
        for c in (r + 1)..dim {
            h[c * dim + r] = h[r * dim + c];
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrdinalUpdate {
    pub params: OrdinalEqParams,
    pub support: Vec<f64>,
    pub outcome: FitterOutcome,
}

/// Maximizes `sum_ik w_ik log p(z_i1 | support_k, x_i)` jointly over the
/// intercept, free cutpoints, coefficients and class support points.
///
/// The returned support points are centered with respect to the class
/// proportions implied by `weights`.
pub fn m_step_ordinal(
    dataset: &Dataset,
    spec: &ModelSpec,
    weights: &WeightMatrix,
    current: &OrdinalEqParams,
    support: &[f64],
    inner: &InnerConfig,
) -> Result<OrdinalUpdate> {
    m_step_ordinal_grouped(dataset, spec, &ordinal_grouping(dataset, spec), weights, current, support, inner)
}

pub(crate) fn m_step_ordinal_grouped(
    dataset: &Dataset,
    spec: &ModelSpec,
    groups: &Grouping,
    weights: &WeightMatrix,
    current: &OrdinalEqParams,
    support: &[f64],
    inner: &InnerConfig,
) -> Result<OrdinalUpdate> {
    let k = weights.classes();
    if weights.rows() != dataset.len() || support.len() != k {
        return Err(Error::DimensionMismatch { context: "ordinal M-step", expected: dataset.len(), actual: weights.rows() });
    }
    let idx = &spec.ordinal_covariates;
    let p = idx.len();
    let records = dataset.records();
    let pattern_weights = groups.aggregate(weights);
    let obj = OrdinalObjective {
        z: groups.representative.iter().map(|&i| records[i].z1).collect(),
        x: groups.representative.iter().flat_map(|&i| idx.iter().map(move |&c| records[i].x[c])).collect(),
        p,
        k,
        categories: spec.categories,
        weights: &pattern_weights,
    };
    let mut start: Vec<f64> = support.iter().map(|s| current.intercept + s).collect();
    start.extend_from_slice(&current.cutpoints[1..]);
    start.extend_from_slice(&current.coefficients);
    let out = maximize(&obj, start, inner.max_iter, inner.tol, "ordinal")?;

    let class_mass = weights.column_sums();
    let total: f64 = class_mass.iter().sum();
    let intercept: f64 = (0..k).map(|c| class_mass[c] / total * out.theta[c]).sum();
    let mut cutpoints = vec![0.0];
    cutpoints.extend_from_slice(&out.theta[k..k + spec.categories - 2]);
    Ok(OrdinalUpdate {
        params: OrdinalEqParams {
            intercept,
            cutpoints,
            coefficients: out.theta[k + spec.categories - 2..].to_vec(),
        },
        support: out.theta[..k].iter().map(|c| c - intercept).collect(),
        outcome: FitterOutcome::from_newton(&out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::fixtures::two_class_data;
    use crate::model::DataRecord;

    fn inner() -> InnerConfig {
        InnerConfig { max_iter: 50, tol: 1e-10 }
    }

    fn flat(u: &OrdinalUpdate) -> Vec<f64> {
        let mut v = vec![u.params.intercept];
        v.extend(&u.params.cutpoints);
        v.extend(&u.params.coefficients);
        v.extend(&u.support);
        v
    }

    #[test]
    fn halving_all_weights_keeps_the_maximizer() {
        let (data, spec, theta) = two_class_data(300, 5);
        let w = WeightMatrix::constant(data.len(), 2, 1.0);
        let a = m_step_ordinal(&data, &spec, &w, &theta.ordinal, &theta.latent.ordinal_support, &inner()).unwrap();
        let b = m_step_ordinal(&data, &spec, &w.scaled(0.5), &theta.ordinal, &theta.latent.ordinal_support, &inner())
            .unwrap();
        for (p, q) in flat(&a).iter().zip(&flat(&b)) {
            assert!((p - q).abs() < 1e-7, "{p} vs {q}");
        }
        assert!(a.outcome.converged);
    }

    #[test]
    fn marginal_proportions_without_covariates() {
        // counts 2, 3, 5: P(z >= 2) = 0.8, P(z >= 3) = 0.5
        let z = [1, 1, 2, 2, 2, 3, 3, 3, 3, 3];
        let records = z.iter().map(|&z1| DataRecord { x: vec![], z1, z2: 0, y: vec![0.0] }).collect();
        let data = Dataset::with_generic_labels(records, 3).unwrap();
        let spec = ModelSpec::full(1, 3, 0, 1);
        let start = OrdinalEqParams { intercept: 0.0, cutpoints: vec![0.0, -0.5], coefficients: vec![] };
        let up = m_step_ordinal(&data, &spec, &WeightMatrix::constant(10, 1, 1.0), &start, &[0.0], &inner()).unwrap();
        let logit = |p: f64| (p / (1.0 - p)).ln();
        assert!((up.params.intercept - logit(0.8)).abs() < 1e-8);
        assert!((up.params.cutpoints[1] - (logit(0.5) - logit(0.8))).abs() < 1e-8);
    }

    #[test]
    fn single_observed_category_is_flagged() {
        let records = (0..20).map(|_| DataRecord { x: vec![], z1: 3, z2: 0, y: vec![0.0] }).collect();
        let data = Dataset::with_generic_labels(records, 3).unwrap();
        let spec = ModelSpec::full(1, 3, 0, 1);
        let start = OrdinalEqParams { intercept: 0.0, cutpoints: vec![0.0, -1.0], coefficients: vec![] };
        let up = m_step_ordinal(&data, &spec, &WeightMatrix::constant(20, 1, 1.0), &start, &[0.0], &inner()).unwrap();
        // the intercept drifts upward until the iteration cap; the fit reports
        // non-convergence instead of a spurious optimum
        assert!(!up.outcome.converged, "{up:?}");
        assert_eq!(up.outcome.iterations, 50);
        assert!(up.params.intercept > 10.0);
    }
}
