//! Parameter containers, identifiability centering and the reduced
//! (free-parameter) coordinate system used for differentiation.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on the weighted mean of the support points.
pub const CENTERING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalEqParams {
    pub intercept: f64,
    /// `J - 1` cutpoints, the first fixed at 0, non-increasing.
    pub cutpoints: Vec<f64>,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryEqParams {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Coefficients on the ordinal-cause dummies.
    pub cause_coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianEqParams {
    pub intercept: Vec<f64>,
    /// One row per outcome.
    pub coefficients: Vec<Vec<f64>>,
    /// One row per outcome, columns = ordinal dummies then binary cause.
    pub cause_coefficients: Vec<Vec<f64>>,
    pub covariance: Vec<Vec<f64>>,
}

/// Discrete distribution of the class-specific intercept shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentStructure {
    pub ordinal_support: Vec<f64>,
    pub binary_support: Vec<f64>,
    /// `K` rows of length `d`.
    pub outcome_support: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub ordinal: OrdinalEqParams,
    pub binary: BinaryEqParams,
    pub gaussian: GaussianEqParams,
    pub latent: LatentStructure,
}

/// Role of one coordinate of the free-parameter vector.
///
/// Equation coefficients are indexed by position in the equation's covariate
/// list; classes are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FreeParameter {
    OrdinalIntercept,
    OrdinalCutpoint(usize),
    OrdinalCoefficient(usize),
    BinaryIntercept,
    BinaryCoefficient(usize),
    BinaryCause(usize),
    OutcomeIntercept(usize),
    OutcomeCoefficient { outcome: usize, column: usize },
    OutcomeCause { outcome: usize, column: usize },
    Covariance(usize, usize),
    OrdinalSupport(usize),
    BinarySupport(usize),
    OutcomeSupport { class: usize, outcome: usize },
    LogWeightRatio(usize),
}

impl FreeParameter {
    /// Structural (non-latent, non-variance) coefficient.
    pub fn is_structural(&self) -> bool {
        !matches!(
            self,
            Self::Covariance(..)
                | Self::OrdinalSupport(_)
                | Self::BinarySupport(_)
                | Self::OutcomeSupport { .. }
                | Self::LogWeightRatio(_)
        )
    }
}

impl fmt::Display for FreeParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::OrdinalIntercept => write!(f, "ordinal.intercept"),
            Self::OrdinalCutpoint(j) => write!(f, "ordinal.cutpoint[{}]", j + 1),
            Self::OrdinalCoefficient(c) => write!(f, "ordinal.coef[{c}]"),
            Self::BinaryIntercept => write!(f, "binary.intercept"),
            Self::BinaryCoefficient(c) => write!(f, "binary.coef[{c}]"),
            Self::BinaryCause(c) => write!(f, "binary.cause[{c}]"),
            Self::OutcomeIntercept(r) => write!(f, "outcome[{r}].intercept"),
            Self::OutcomeCoefficient { outcome, column } => write!(f, "outcome[{outcome}].coef[{column}]"),
            Self::OutcomeCause { outcome, column } => write!(f, "outcome[{outcome}].cause[{column}]"),
            Self::Covariance(r, c) => write!(f, "covariance[{r},{c}]"),
            Self::OrdinalSupport(k) => write!(f, "support.ordinal[{}]", k + 1),
            Self::BinarySupport(k) => write!(f, "support.binary[{}]", k + 1),
            Self::OutcomeSupport { class, outcome } => write!(f, "support.outcome[{}][{outcome}]", class + 1),
            Self::LogWeightRatio(k) => write!(f, "log_weight_ratio[{}]", k + 1),
        }
    }
}

fn weighted_mean(weights: &[f64], values: impl Iterator<Item = f64>) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum()
}

impl ParameterSet {
    /// Neutral parameters: zero coefficients and supports, evenly spaced
    /// cutpoints, identity covariance, uniform weights.
    pub fn neutral(spec: &ModelSpec) -> Self {
        let k = spec.classes;
        let d = spec.outcome_dim;
        Self {
            ordinal: OrdinalEqParams {
                intercept: 0.0,
                cutpoints: (0..spec.categories - 1).map(|j| -(j as f64)).collect(),
                coefficients: vec![0.0; spec.ordinal_covariates.len()],
            },
            binary: BinaryEqParams {
                intercept: 0.0,
                coefficients: vec![0.0; spec.binary_covariates.len()],
                cause_coefficients: vec![0.0; spec.binary_cause_count()],
            },
            gaussian: GaussianEqParams {
                intercept: vec![0.0; d],
                coefficients: vec![vec![0.0; spec.outcome_covariates.len()]; d],
                cause_coefficients: vec![vec![0.0; spec.outcome_cause_count()]; d],
                covariance: (0..d).map(|r| (0..d).map(|c| if r == c { 1.0 } else { 0.0 }).collect()).collect(),
            },
            latent: LatentStructure {
                ordinal_support: vec![0.0; k],
                binary_support: vec![0.0; k],
                outcome_support: vec![vec![0.0; d]; k],
                weights: vec![1.0 / k as f64; k],
            },
        }
    }

    pub fn classes(&self) -> usize {
        self.latent.weights.len()
    }

    /// Checks dimensions against `spec` and every parameter invariant except centering.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let k = spec.classes;
        let d = spec.outcome_dim;
        let dims = |ctx: &'static str, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { context: ctx, expected, actual })
            }
        };
        dims("ordinal cutpoints", spec.categories - 1, self.ordinal.cutpoints.len())?;
        dims("ordinal coefficients", spec.ordinal_covariates.len(), self.ordinal.coefficients.len())?;
        dims("binary coefficients", spec.binary_covariates.len(), self.binary.coefficients.len())?;
        dims("binary cause coefficients", spec.binary_cause_count(), self.binary.cause_coefficients.len())?;
        dims("outcome intercepts", d, self.gaussian.intercept.len())?;
        dims("outcome coefficient rows", d, self.gaussian.coefficients.len())?;
        dims("outcome cause rows", d, self.gaussian.cause_coefficients.len())?;
        dims("covariance rows", d, self.gaussian.covariance.len())?;
        for r in 0..d {
            dims("outcome coefficients", spec.outcome_covariates.len(), self.gaussian.coefficients[r].len())?;
            dims("outcome cause coefficients", spec.outcome_cause_count(), self.gaussian.cause_coefficients[r].len())?;
            dims("covariance columns", d, self.gaussian.covariance[r].len())?;
        }
        dims("ordinal support", k, self.latent.ordinal_support.len())?;
        dims("binary support", k, self.latent.binary_support.len())?;
        dims("outcome support", k, self.latent.outcome_support.len())?;
        dims("class weights", k, self.latent.weights.len())?;
        for row in &self.latent.outcome_support {
            dims("outcome support", d, row.len())?;
        }
        if self.ordinal.cutpoints[0] != 0.0 {
            return Err(Error::InvalidParameters("first cutpoint must be fixed at 0".into()));
        }
        if self.ordinal.cutpoints.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameters("cutpoints must be non-increasing".into()));
        }
        if self.latent.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidParameters("class weights must be positive".into()));
        }
        let total: f64 = self.latent.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameters(format!("class weights sum to {total}")));
        }
        let sigma = &self.gaussian.covariance;
        for r in 0..d {
            for c in 0..r {
                if sigma[r][c] != sigma[c][r] {
                    return Err(Error::InvalidParameters("covariance matrix is not symmetric".into()));
                }
            }
        }
        self.gaussian.factor()?;
        if !self.to_free_unchecked().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameters("non-finite parameter value".into()));
        }
        Ok(())
    }

    /// Largest absolute weighted mean over all latent dimensions.
    pub fn max_support_mean(&self) -> f64 {
        let w = &self.latent.weights;
        let mut m = weighted_mean(w, self.latent.ordinal_support.iter().copied())
            .abs()
            .max(weighted_mean(w, self.latent.binary_support.iter().copied()).abs());
        let d = self.gaussian.intercept.len();
        for r in 0..d {
            m = m.max(weighted_mean(w, self.latent.outcome_support.iter().map(|s| s[r])).abs());
        }
        m
    }

    /// Shifts every latent dimension to weighted mean zero and moves the
    /// shift into the matching intercept; class-specific predictors are unchanged.
    pub fn center_support_points(&self) -> Self {
        let mut out = self.clone();
        let w = &self.latent.weights;
        let m = weighted_mean(w, self.latent.ordinal_support.iter().copied());
        out.latent.ordinal_support.iter_mut().for_each(|s| *s -= m);
        out.ordinal.intercept += m;
        let m = weighted_mean(w, self.latent.binary_support.iter().copied());
        out.latent.binary_support.iter_mut().for_each(|s| *s -= m);
        out.binary.intercept += m;
        for r in 0..self.gaussian.intercept.len() {
            let m = weighted_mean(w, self.latent.outcome_support.iter().map(|s| s[r]));
            out.latent.outcome_support.iter_mut().for_each(|s| s[r] -= m);
            out.gaussian.intercept[r] += m;
        }
        out
    }

    /// Relabels classes so that new class `i` is old class `order[i]`.
    pub fn permute_classes(&self, order: &[usize]) -> Self {
        let mut out = self.clone();
        let l = &self.latent;
        out.latent = LatentStructure {
            ordinal_support: order.iter().map(|&k| l.ordinal_support[k]).collect(),
            binary_support: order.iter().map(|&k| l.binary_support[k]).collect(),
            outcome_support: order.iter().map(|&k| l.outcome_support[k].clone()).collect(),
            weights: order.iter().map(|&k| l.weights[k]).collect(),
        };
        out
    }

    /// Class order by ascending first outcome support point (ties keep index order).
    pub fn outcome_support_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.classes()).collect();
        order.sort_by(|&a, &b| {
            self.latent.outcome_support[a][0].total_cmp(&self.latent.outcome_support[b][0])
        });
        order
    }

    pub fn free_layout(spec: &ModelSpec) -> Vec<FreeParameter> {
        use FreeParameter as F;
        let d = spec.outcome_dim;
        let mut out = vec![F::OrdinalIntercept];
        out.extend((1..spec.categories - 1).map(F::OrdinalCutpoint));
        out.extend((0..spec.ordinal_covariates.len()).map(F::OrdinalCoefficient));
        out.push(F::BinaryIntercept);
        out.extend((0..spec.binary_covariates.len()).map(F::BinaryCoefficient));
        out.extend((0..spec.binary_cause_count()).map(F::BinaryCause));
        out.extend((0..d).map(F::OutcomeIntercept));
        for outcome in 0..d {
            out.extend((0..spec.outcome_covariates.len()).map(|column| F::OutcomeCoefficient { outcome, column }));
        }
        for outcome in 0..d {
            out.extend((0..spec.outcome_cause_count()).map(|column| F::OutcomeCause { outcome, column }));
        }
        for r in 0..d {
            out.extend((0..=r).map(|c| F::Covariance(r, c)));
        }
        out.extend((1..spec.classes).map(F::OrdinalSupport));
        out.extend((1..spec.classes).map(F::BinarySupport));
        for class in 1..spec.classes {
            out.extend((0..d).map(|outcome| F::OutcomeSupport { class, outcome }));
        }
        out.extend((1..spec.classes).map(F::LogWeightRatio));
        out
    }

    fn to_free_unchecked(&self) -> Vec<f64> {
        let k = self.classes();
        let d = self.gaussian.intercept.len();
        let mut v = vec![self.ordinal.intercept];
        v.extend_from_slice(&self.ordinal.cutpoints[1..]);
        v.extend_from_slice(&self.ordinal.coefficients);
        v.push(self.binary.intercept);
        v.extend_from_slice(&self.binary.coefficients);
        v.extend_from_slice(&self.binary.cause_coefficients);
        v.extend_from_slice(&self.gaussian.intercept);
        self.gaussian.coefficients.iter().for_each(|r| v.extend_from_slice(r));
        self.gaussian.cause_coefficients.iter().for_each(|r| v.extend_from_slice(r));
        for r in 0..d {
            v.extend((0..=r).map(|c| self.gaussian.covariance[r][c]));
        }
        v.extend_from_slice(&self.latent.ordinal_support[1..]);
        v.extend_from_slice(&self.latent.binary_support[1..]);
        for s in &self.latent.outcome_support[1..] {
            v.extend_from_slice(s);
        }
        let w0 = self.latent.weights[0].ln();
        v.extend((1..k).map(|h| self.latent.weights[h].ln() - w0));
        v
    }

    /// Coordinates in the reduced basis: first cutpoint dropped, class-1
    /// support points implied by centering, weights as log-ratios to class 1.
    ///
    /// Only a bijection for centered parameter sets.
    pub fn to_free(&self, spec: &ModelSpec) -> Result<Vec<f64>> {
        self.validate(spec)?;
        Ok(self.to_free_unchecked())
    }

    /// Inverse of [`ParameterSet::to_free`]; the result is centered by construction.
    pub fn from_free(spec: &ModelSpec, free: &[f64]) -> Result<Self> {
        let layout_len = crate::model::count_parameters(spec);
        if free.len() != layout_len {
            return Err(Error::DimensionMismatch { context: "free parameter vector", expected: layout_len, actual: free.len() });
        }
        let k = spec.classes;
        let d = spec.outcome_dim;
        let mut it = free.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let ordinal_intercept = take(1)[0];
        let mut cutpoints = vec![0.0];
        cutpoints.extend(take(spec.categories - 2));
        let ordinal_coef = take(spec.ordinal_covariates.len());
        let binary_intercept = take(1)[0];
        let binary_coef = take(spec.binary_covariates.len());
        let binary_cause = take(spec.binary_cause_count());
        let outcome_intercept = take(d);
        let outcome_coef: Vec<Vec<f64>> = (0..d).map(|_| take(spec.outcome_covariates.len())).collect();
        let outcome_cause: Vec<Vec<f64>> = (0..d).map(|_| take(spec.outcome_cause_count())).collect();
        let mut covariance = vec![vec![0.0; d]; d];
        for r in 0..d {
            let row = take(r + 1);
            for c in 0..=r {
                covariance[r][c] = row[c];
                covariance[c][r] = row[c];
            }
        }
        let ord_rest = take(k - 1);
        let bin_rest = take(k - 1);
        let out_rest: Vec<Vec<f64>> = (1..k).map(|_| take(d)).collect();
        let ratios = take(k - 1);

        // softmax with class 1 as the zero logit
        let max_logit = ratios.iter().copied().fold(0.0, f64::max);
        let mut weights = vec![(-max_logit).exp()];
        weights.extend(ratios.iter().map(|r| (r - max_logit).exp()));
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        let implied = |rest: &[f64]| -> f64 {
            -rest.iter().zip(&ratios).map(|(s, r)| r.exp() * s).sum::<f64>()
        };
        let mut ordinal_support = vec![implied(&ord_rest)];
        ordinal_support.extend(ord_rest.iter().copied());
        let mut binary_support = vec![implied(&bin_rest)];
        binary_support.extend(bin_rest.iter().copied());
        let first: Vec<f64> = (0..d)
            .map(|r| implied(&out_rest.iter().map(|s| s[r]).collect::<Vec<_>>()))
            .collect();
        let mut outcome_support = vec![first];
        outcome_support.extend(out_rest);

        Ok(Self {
            ordinal: OrdinalEqParams { intercept: ordinal_intercept, cutpoints, coefficients: ordinal_coef },
            binary: BinaryEqParams {
                intercept: binary_intercept,
                coefficients: binary_coef,
                cause_coefficients: binary_cause,
            },
            gaussian: GaussianEqParams {
                intercept: outcome_intercept,
                coefficients: outcome_coef,
                cause_coefficients: outcome_cause,
                covariance,
            },
            latent: LatentStructure { ordinal_support, binary_support, outcome_support, weights },
        })
    }

    /// Covariance as an `nalgebra` matrix.
    pub fn covariance_matrix(&self) -> nalgebra::DMatrix<f64> {
        linalg::from_rows(&self.gaussian.covariance)
    }
}
