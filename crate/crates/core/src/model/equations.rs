//! Per-equation probabilities and densities at a given latent support point.

use super::{BinaryEqParams, GaussianEqParams, ModelSpec, OrdinalEqParams};
use crate::error::{Error, Result};
use crate::linalg::{self, CovarianceFactor};

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(t))` without overflow for large `|t|`.
pub fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Log-probability of ordinal category `z` (1-based) under the cumulative
/// logit `P(z >= j) = sigmoid(eta + cutpoints[j - 2])`, `j = 2..=J`.
pub fn ordinal_log_prob(z: usize, eta: f64, cutpoints: &[f64]) -> f64 {
    let j_max = cutpoints.len() + 1;
    if z == 1 {
        log_sigmoid(-(eta + cutpoints[0]))
    } else if z == j_max {
        log_sigmoid(eta + cutpoints[j_max - 2])
    } else {
        let a = eta + cutpoints[z - 2];
        let b = eta + cutpoints[z - 1];
        if b >= a {
            return f64::NEG_INFINITY;
        }
        log_sigmoid(a) + log_sigmoid(-b) + (-(b - a).exp_m1()).ln()
    }
}

/// Value and first/second derivatives of one ordinal log-probability with
/// respect to the upper (`a`) and lower (`b`) cumulative predictors.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct OrdinalTerm {
    pub value: f64,
    pub da: f64,
    pub db: f64,
    pub daa: f64,
    pub dbb: f64,
    pub dab: f64,
}

pub(crate) fn ordinal_term(z: usize, eta: f64, cutpoints: &[f64]) -> OrdinalTerm {
    let j_max = cutpoints.len() + 1;
    if z == 1 {
        let b = eta + cutpoints[0];
        let sb = sigmoid(b);
        OrdinalTerm { value: log_sigmoid(-b), db: -sb, dbb: -sb * (1.0 - sb), ..Default::default() }
    } else if z == j_max {
        let a = eta + cutpoints[j_max - 2];
        let sa = sigmoid(a);
        OrdinalTerm { value: log_sigmoid(a), da: 1.0 - sa, daa: -sa * (1.0 - sa), ..Default::default() }
    } else {
        let a = eta + cutpoints[z - 2];
        let b = eta + cutpoints[z - 1];
        if b >= a {
            return OrdinalTerm { value: f64::NEG_INFINITY, ..Default::default() };
        }
        let gap = -(b - a).exp_m1();
        let (sa, sb) = (sigmoid(a), sigmoid(b));
        let (sna, snb) = (sigmoid(-a), sigmoid(-b));
        let da = sna / (snb * gap);
        let db = -sb / (sa * gap);
        // f'(t) / D with f = sigmoid * (1 - sigmoid), rewritten via da, db
        let daa = da * (1.0 - 2.0 * sa) - da * da;
        let dbb = db * (1.0 - 2.0 * sb) - db * db;
        OrdinalTerm {
            value: log_sigmoid(a) + log_sigmoid(-b) + gap.ln(),
            da,
            db,
            daa,
            dbb,
            dab: -da * db,
        }
    }
}

fn check_cutpoints(cutpoints: &[f64]) -> Result<()> {
    if cutpoints.is_empty() {
        return Err(Error::InvalidParameters("ordinal equation needs at least one cutpoint".into()));
    }
    if cutpoints[0] != 0.0 {
        return Err(Error::InvalidParameters("first cutpoint must be fixed at 0".into()));
    }
    if cutpoints.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameters("cutpoints must be non-increasing".into()));
    }
    Ok(())
}

/// Category probabilities `p(z1 = j | alpha, x)`, `j = 1..=J`.
///
/// `x` holds the values of the covariates entering the ordinal equation.
pub fn ordinal_category_probs(x: &[f64], alpha: f64, params: &OrdinalEqParams) -> Result<Vec<f64>> {
    if x.len() != params.coefficients.len() {
        return Err(Error::DimensionMismatch {
            context: "ordinal covariates",
            expected: params.coefficients.len(),
            actual: x.len(),
        });
    }
    check_cutpoints(&params.cutpoints)?;
    let eta = params.intercept + alpha + dot(x, &params.coefficients);
    let j_max = params.cutpoints.len() + 1;
    Ok((1..=j_max).map(|j| ordinal_log_prob(j, eta, &params.cutpoints).exp()).collect())
}

/// `p(z2 = 1 | alpha, x, z1)`.
pub fn binary_prob(x: &[f64], z1: usize, alpha: f64, params: &BinaryEqParams, spec: &ModelSpec) -> Result<f64> {
    if x.len() != params.coefficients.len() {
        return Err(Error::DimensionMismatch {
            context: "binary covariates",
            expected: params.coefficients.len(),
            actual: x.len(),
        });
    }
    if params.cause_coefficients.len() != spec.binary_cause_count() {
        return Err(Error::DimensionMismatch {
            context: "binary cause coefficients",
            expected: spec.binary_cause_count(),
            actual: params.cause_coefficients.len(),
        });
    }
    if z1 < 1 || z1 > spec.categories {
        return Err(Error::InvalidData(format!("z1 = {z1} outside 1..={}", spec.categories)));
    }
    let mut eta = params.intercept + alpha + dot(x, &params.coefficients);
    if spec.binary_uses_ordinal {
        if let Some(c) = spec.ordinal_dummy_index(z1) {
            eta += params.cause_coefficients[c];
        }
    }
    Ok(sigmoid(eta))
}

/// Log-density of the outcome vector at class shift `delta`.
pub fn gaussian_log_density(
    y: &[f64],
    x: &[f64],
    z1: usize,
    z2: u8,
    delta: &[f64],
    params: &GaussianEqParams,
    spec: &ModelSpec,
) -> Result<f64> {
    let d = params.intercept.len();
    if y.len() != d || delta.len() != d {
        return Err(Error::DimensionMismatch { context: "outcome dimension", expected: d, actual: y.len() });
    }
    let p = params.coefficients.first().map_or(0, Vec::len);
    if x.len() != p {
        return Err(Error::DimensionMismatch { context: "outcome covariates", expected: p, actual: x.len() });
    }
    let q = spec.outcome_cause_count();
    if params.cause_coefficients.first().map_or(0, Vec::len) != q {
        return Err(Error::DimensionMismatch {
            context: "outcome cause coefficients",
            expected: q,
            actual: params.cause_coefficients.first().map_or(0, Vec::len),
        });
    }
    let factor = params.factor()?;
    let mut causes = vec![0.0; q];
    spec.outcome_causes_into(z1, z2, &mut causes);
    let resid: Vec<f64> = (0..d)
        .map(|r| {
            y[r] - params.intercept[r]
                - delta[r]
                - dot(&params.coefficients[r], x)
                - dot(&params.cause_coefficients[r], &causes)
        })
        .collect();
    let mut scratch = vec![0.0; d];
    Ok(factor.log_density(&resid, &mut scratch))
}

/// Residual correlation between the first two outcomes.
pub fn correlation_from_sigma(sigma: &[Vec<f64>]) -> Result<f64> {
    if sigma.len() < 2 {
        return Err(Error::DegenerateCovariance("correlation needs at least two outcomes".into()));
    }
    let (v1, v2, c) = (sigma[0][0], sigma[1][1], sigma[0][1]);
    if v1 <= 0.0 || v2 <= 0.0 {
        return Err(Error::DegenerateCovariance("zero or negative variance".into()));
    }
    Ok(c / (v1 * v2).sqrt())
}

impl GaussianEqParams {
    /// Triangular factor of the residual covariance.
    pub fn factor(&self) -> Result<CovarianceFactor> {
        CovarianceFactor::new(&linalg::from_rows(&self.covariance)).ok_or(Error::NotPositiveDefinite)
    }
}
