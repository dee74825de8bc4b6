use super::equations::{log_sigmoid, ordinal_log_prob};
use super::{DataRecord, Dataset, ModelSpec, ParameterSet};
use crate::error::{Error, Result};
use crate::linalg::CovarianceFactor;

/// `ln(sum(exp(values)))`, shifted by the maximum.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn dot_selected(x: &[f64], idx: &[usize], coef: &[f64]) -> f64 {
    idx.iter().zip(coef).map(|(&c, b)| x[c] * b).sum()
}

/// Class-invariant parts of the three linear predictors for one record.
pub(crate) struct RecordPredictors {
    pub ordinal: f64,
    pub binary: f64,
    /// `y - (intercept + coefficients x + cause_coefficients causes)`.
    pub outcome_resid: Vec<f64>,
}

pub(crate) fn record_predictors(
    record: &DataRecord,
    spec: &ModelSpec,
    theta: &ParameterSet,
    causes: &mut [f64],
) -> RecordPredictors {
    let ordinal = theta.ordinal.intercept + dot_selected(&record.x, &spec.ordinal_covariates, &theta.ordinal.coefficients);
    let mut binary = theta.binary.intercept + dot_selected(&record.x, &spec.binary_covariates, &theta.binary.coefficients);
    if spec.binary_uses_ordinal {
        if let Some(c) = spec.ordinal_dummy_index(record.z1) {
            binary += theta.binary.cause_coefficients[c];
        }
    }
    spec.outcome_causes_into(record.z1, record.z2, causes);
    let g = &theta.gaussian;
    let outcome_resid = (0..spec.outcome_dim)
        .map(|r| {
            record.y[r]
                - g.intercept[r]
                - dot_selected(&record.x, &spec.outcome_covariates, &g.coefficients[r])
                - g.cause_coefficients[r].iter().zip(causes.iter()).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    RecordPredictors { ordinal, binary, outcome_resid }
}

fn class_term(
    record: &DataRecord,
    pred: &RecordPredictors,
    theta: &ParameterSet,
    factor: &CovarianceFactor,
    k: usize,
    resid: &mut [f64],
    scratch: &mut [f64],
) -> f64 {
    let lat = &theta.latent;
    let lo = ordinal_log_prob(record.z1, pred.ordinal + lat.ordinal_support[k], &theta.ordinal.cutpoints);
    let eta = pred.binary + lat.binary_support[k];
    let lb = if record.z2 == 1 { log_sigmoid(eta) } else { log_sigmoid(-eta) };
    for (r, v) in resid.iter_mut().enumerate() {
        *v = pred.outcome_resid[r] - lat.outcome_support[k][r];
    }
    lo + lb + factor.log_density(resid, scratch)
}

/// Joint log-probability of one record's responses given class `k` (0-based).
pub fn class_conditional_log_lik(record: &DataRecord, spec: &ModelSpec, theta: &ParameterSet, k: usize) -> Result<f64> {
    if k >= theta.classes() {
        return Err(Error::InvalidData(format!("class index {k} out of range for K = {}", theta.classes())));
    }
    if record.x.len() != spec.n_covariates || record.y.len() != spec.outcome_dim {
        return Err(Error::DimensionMismatch {
            context: "record",
            expected: spec.n_covariates,
            actual: record.x.len(),
        });
    }
    theta.validate(spec)?;
    let factor = theta.gaussian.factor()?;
    let mut causes = vec![0.0; spec.outcome_cause_count()];
    let pred = record_predictors(record, spec, theta, &mut causes);
    let d = spec.outcome_dim;
    Ok(class_term(record, &pred, theta, &factor, k, &mut vec![0.0; d], &mut vec![0.0; d]))
}

/// Row-major `n x K` matrix of class-conditional log-likelihoods.
#[derive(Debug, Clone)]
pub struct ClassLogLik {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl ClassLogLik {
    pub fn from_values(n: usize, k: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * k);
        Self { n, k, values }
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    /// `sum_i ln sum_k weights_k exp(l_ik)`.
    pub fn mixture_log_lik(&self, weights: &[f64]) -> f64 {
        let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let mut buf = vec![0.0; self.k];
        (0..self.n)
            .map(|i| {
                for (b, (l, lw)) in buf.iter_mut().zip(self.row(i).iter().zip(&log_w)) {
                    *b = l + lw;
                }
                log_sum_exp(&buf)
            })
            .sum()
    }
}

pub fn class_log_lik_matrix(dataset: &Dataset, spec: &ModelSpec, theta: &ParameterSet) -> Result<ClassLogLik> {
    let factor = theta.gaussian.factor()?;
    let k = theta.classes();
    let d = spec.outcome_dim;
    let mut causes = vec![0.0; spec.outcome_cause_count()];
    let (mut resid, mut scratch) = (vec![0.0; d], vec![0.0; d]);
    let mut values = Vec::with_capacity(dataset.len() * k);
    for record in dataset.records() {
        let pred = record_predictors(record, spec, theta, &mut causes);
        for c in 0..k {
            values.push(class_term(record, &pred, theta, &factor, c, &mut resid, &mut scratch));
        }
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameters("NaN class log-likelihood".into()));
    }
    Ok(ClassLogLik { n: dataset.len(), k, values })
}

/// Observed-data log-likelihood of the mixture.
pub fn mixture_log_lik(dataset: &Dataset, spec: &ModelSpec, theta: &ParameterSet) -> Result<f64> {
    spec.check_dataset(dataset)?;
    theta.validate(spec)?;
    Ok(class_log_lik_matrix(dataset, spec, theta)?.mixture_log_lik(&theta.latent.weights))
}

/// Number of free parameters after the cutpoint, centering and simplex constraints.
pub fn count_parameters(spec: &ModelSpec) -> usize {
    let d = spec.outcome_dim;
    let k = spec.classes;
    let ordinal = 1 + (spec.categories - 2) + spec.ordinal_covariates.len();
    let binary = 1 + spec.binary_covariates.len() + spec.binary_cause_count();
    let outcome = d * (1 + spec.outcome_covariates.len() + spec.outcome_cause_count());
    let covariance = d * (d + 1) / 2;
    let latent = (k - 1) * (2 + d) + (k - 1);
    ordinal + binary + outcome + covariance + latent
}
