//! Wald statistics, delta-method standard errors and the inference report.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::score::{fd_step, observed_information, score_vector};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dataset, FreeParameter, ModelSpec, ParameterSet};

/// Largest log-likelihood gain of one Newton step from a point still
/// accepted as stationary.
const STATIONARY_TOL: f64 = 1e-3;

/// Two-sided p-value of a standard normal statistic.
pub fn normal_p_value(t: f64) -> f64 {
    libm::erfc(t.abs() / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wald {
    pub estimate: f64,
    pub se: Option<f64>,
    pub t: Option<f64>,
    pub p: Option<f64>,
}

impl Wald {
    pub fn new(estimate: f64, se: Option<f64>) -> Self {
        let se = se.filter(|s| s.is_finite() && *s > 0.0);
        let t = se.map(|s| estimate / s);
        Self { estimate, se, t, p: t.map(normal_p_value) }
    }
}

/// Inverse of a positive definite information matrix.
pub fn information_inverse(info: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::spd_inverse(info).ok_or(Error::NotPositiveDefinite)
}

/// Square roots of the diagonal of the inverse information.
pub fn standard_errors(info: &DMatrix<f64>) -> Result<Vec<f64>> {
    let cov = information_inverse(info)?;
    Ok((0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect())
}

/// SE of `theta_i - theta_j` from their joint covariance.
pub fn difference_se(cov: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (cov[(i, i)] + cov[(j, j)] - 2.0 * cov[(i, j)]).max(0.0).sqrt()
}

/// Delta-method SE of a scalar function of the parameters, with the
/// gradient taken by central differences in the free basis.
pub fn delta_method_se(
    spec: &ModelSpec,
    free: &[f64],
    cov: &DMatrix<f64>,
    f: impl Fn(&ParameterSet) -> f64,
) -> Result<f64> {
    let m = free.len();
    let mut grad = vec![0.0; m];
    let mut probe = free.to_vec();
    for j in 0..m {
        let h = fd_step(free[j]);
        probe[j] = free[j] + h;
        let up = f(&ParameterSet::from_free(spec, &probe)?);
        probe[j] = free[j] - h;
        let down = f(&ParameterSet::from_free(spec, &probe)?);
        probe[j] = free[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    let mut var = 0.0;
    for a in 0..m {
        for b in 0..m {
            var += grad[a] * cov[(a, b)] * grad[b];
        }
    }
    Ok(var.max(0.0).sqrt())
}

/// One latent dimension: ordinal, binary, or one outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentDimension {
    Ordinal,
    Binary,
    Outcome(usize),
}

impl LatentDimension {
    pub fn all(outcome_dim: usize) -> Vec<Self> {
        let mut v = vec![Self::Ordinal, Self::Binary];
        v.extend((0..outcome_dim).map(Self::Outcome));
        v
    }

    pub fn support(&self, theta: &ParameterSet, class: usize) -> f64 {
        match *self {
            Self::Ordinal => theta.latent.ordinal_support[class],
            Self::Binary => theta.latent.binary_support[class],
            Self::Outcome(r) => theta.latent.outcome_support[class][r],
        }
    }
}

/// Difference between the support point of `class` and that of the first class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassContrast {
    pub dimension: LatentDimension,
    /// 0-based; always at least 1.
    pub class: usize,
    pub wald: Wald,
}

/// Contrasts of every latent dimension against the first class, with
/// delta-method SEs from the covariance of the free parameters.
pub fn class_contrasts(spec: &ModelSpec, theta: &ParameterSet, cov: &DMatrix<f64>) -> Result<Vec<ClassContrast>> {
    let free = theta.to_free(spec)?;
    let mut out = Vec::new();
    for dimension in LatentDimension::all(spec.outcome_dim) {
        for class in 1..spec.classes {
            let f = |t: &ParameterSet| dimension.support(t, class) - dimension.support(t, 0);
            let se = delta_method_se(spec, &free, cov, f)?;
            out.push(ClassContrast { dimension, class, wald: Wald::new(f(theta), Some(se)) });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub parameter: FreeParameter,
    pub name: String,
    pub wald: Wald,
}

/// A support point or class weight with its delta-method SE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRow {
    /// `None` for class weights.
    pub dimension: Option<LatentDimension>,
    pub class: usize,
    pub estimate: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    /// One row per free parameter, in [`ParameterSet::free_layout`] order.
    pub parameters: Vec<ParameterRow>,
    /// Support points of every class (including the implied first class) and class weights.
    pub latent: Vec<LatentRow>,
    pub contrasts: Vec<ClassContrast>,
    /// Outcome correlations `(row, column, estimate, se)` for `row > column`.
    pub correlations: Vec<(usize, usize, Wald)>,
    pub information_positive_definite: bool,
    pub max_abs_score: f64,
    pub warnings: Vec<String>,
}

fn correlation(theta: &ParameterSet, r: usize, c: usize) -> f64 {
    let s = &theta.gaussian.covariance;
    s[r][c] / (s[r][r] * s[c][c]).sqrt()
}

/// Standard errors, Wald tests and class contrasts at a fitted `theta`.
///
/// A non positive definite information matrix yields a report without SEs
/// and a warning rather than an error.
pub fn infer(dataset: &Dataset, spec: &ModelSpec, theta: &ParameterSet) -> Result<InferenceReport> {
    let mut warnings = Vec::new();
    let free = theta.to_free(spec)?;
    let score = score_vector(dataset, spec, theta)?;
    let max_abs_score = score.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let info = observed_information(dataset, spec, theta)?;
    let cov = match information_inverse(&info) {
        Ok(c) => Some(c),
        Err(_) => {
            warnings.push("observed information is not positive definite; standard errors suppressed".into());
            None
        }
    };
    if let Some(c) = &cov {
        let s = nalgebra::DVector::from_column_slice(&score);
        let gain = 0.5 * s.dot(&(c * &s));
        if gain > STATIONARY_TOL {
            warnings.push(format!(
                "estimate is not a stationary point (max |score| = {max_abs_score:.3e}, Newton gain {gain:.3e})"
            ));
        }
    }
    let layout = ParameterSet::free_layout(spec);
    let parameters = layout
        .iter()
        .enumerate()
        .map(|(j, &parameter)| {
            let se = cov.as_ref().map(|c| c[(j, j)].max(0.0).sqrt());
            ParameterRow { parameter, name: parameter.to_string(), wald: Wald::new(free[j], se) }
        })
        .collect();

    let mut latent = Vec::new();
    let se_of = |f: &dyn Fn(&ParameterSet) -> f64| -> Result<Option<f64>> {
        match &cov {
            Some(c) => Ok(Some(delta_method_se(spec, &free, c, f)?)),
            None => Ok(None),
        }
    };
    for dimension in LatentDimension::all(spec.outcome_dim) {
        for class in 0..spec.classes {
            let se = if spec.classes == 1 { None } else { se_of(&|t: &ParameterSet| dimension.support(t, class))? };
            latent.push(LatentRow { dimension: Some(dimension), class, estimate: dimension.support(theta, class), se });
        }
    }
    for class in 0..spec.classes {
        let se = if spec.classes == 1 { None } else { se_of(&|t: &ParameterSet| t.latent.weights[class])? };
        latent.push(LatentRow { dimension: None, class, estimate: theta.latent.weights[class], se });
    }
    let contrasts = match &cov {
        Some(c) if spec.classes > 1 => class_contrasts(spec, theta, c)?,
        _ => Vec::new(),
    };
    let mut correlations = Vec::new();
    for r in 0..spec.outcome_dim {
        for c in 0..r {
            let se = se_of(&|t: &ParameterSet| correlation(t, r, c))?;
            correlations.push((r, c, Wald::new(correlation(theta, r, c), se)));
        }
    }
    Ok(InferenceReport {
        parameters,
        latent,
        contrasts,
        correlations,
        information_positive_definite: cov.is_some(),
        max_abs_score,
        warnings,
    })
}
