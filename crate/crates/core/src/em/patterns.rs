//! Records with identical inputs to a logit equation contribute identical
//! terms, so the logit M-steps and likelihood terms run on distinct patterns.

use std::collections::HashMap;
use std::hash::Hash;

use super::WeightMatrix;
use crate::error::{Error, Result};
use crate::model::likelihood::{dot_selected, record_predictors};
use crate::model::{log_sigmoid, ordinal_log_prob, ClassLogLik, Dataset, ModelSpec, ParameterSet};

/// Assignment of records to patterns, in first-appearance order.
#[derive(Debug, Clone)]
pub(crate) struct Grouping {
    pub of_record: Vec<usize>,
    pub representative: Vec<usize>,
}

impl Grouping {
    fn build<K: Hash + Eq>(keys: impl Iterator<Item = K>) -> Self {
        let mut index: HashMap<K, usize> = HashMap::new();
        let mut representative = Vec::new();
        let of_record = keys
            .enumerate()
            .map(|(i, key)| {
                *index.entry(key).or_insert_with(|| {
                    representative.push(i);
                    representative.len() - 1
                })
            })
            .collect();
        Self { of_record, representative }
    }

    pub fn len(&self) -> usize {
        self.representative.len()
    }

    /// Per-pattern sums of the record weights.
    pub fn aggregate(&self, weights: &WeightMatrix) -> WeightMatrix {
        let k = weights.classes();
        let mut data = vec![0.0; self.len() * k];
        for (i, &g) in self.of_record.iter().enumerate() {
            for (a, w) in data[g * k..(g + 1) * k].iter_mut().zip(weights.row(i)) {
                *a += w;
            }
        }
        WeightMatrix::from_parts(self.len(), k, data)
    }
}

/// Bit pattern of the selected covariates, usable as an exact hash key.
fn covariate_key(x: &[f64], idx: &[usize]) -> Vec<u64> {
    idx.iter().map(|&c| x[c].to_bits()).collect()
}

pub(crate) fn ordinal_grouping(dataset: &Dataset, spec: &ModelSpec) -> Grouping {
    let idx = &spec.ordinal_covariates;
    Grouping::build(dataset.records().iter().map(|r| (r.z1, covariate_key(&r.x, idx))))
}

/// Ordinal-cause dummy hit by `z1` in the binary equation, if any.
pub(crate) fn binary_cause(spec: &ModelSpec, z1: usize) -> Option<usize> {
    if spec.binary_uses_ordinal {
        spec.ordinal_dummy_index(z1)
    } else {
        None
    }
}

pub(crate) fn binary_grouping(dataset: &Dataset, spec: &ModelSpec) -> Grouping {
    let idx = &spec.binary_covariates;
    Grouping::build(
        dataset.records().iter().map(|r| (r.z2, binary_cause(spec, r.z1), covariate_key(&r.x, idx))),
    )
}

/// Both groupings, built once per EM run.
#[derive(Debug, Clone)]
pub(crate) struct DesignPatterns {
    pub ordinal: Grouping,
    pub binary: Grouping,
}

impl DesignPatterns {
    pub fn new(dataset: &Dataset, spec: &ModelSpec) -> Self {
        Self { ordinal: ordinal_grouping(dataset, spec), binary: binary_grouping(dataset, spec) }
    }
}

/// Same values as [`crate::model::class_log_lik_matrix`], with the logit
/// terms evaluated once per pattern.
pub(crate) fn class_log_lik_grouped(
    dataset: &Dataset,
    spec: &ModelSpec,
    theta: &ParameterSet,
    patterns: &DesignPatterns,
) -> Result<ClassLogLik> {
    let factor = theta.gaussian.factor()?;
    let k = theta.classes();
    let d = spec.outcome_dim;
    let records = dataset.records();
    let lat = &theta.latent;

    let mut ordinal = Vec::with_capacity(patterns.ordinal.len() * k);
    for &i in &patterns.ordinal.representative {
        let r = &records[i];
        let eta = theta.ordinal.intercept + dot_selected(&r.x, &spec.ordinal_covariates, &theta.ordinal.coefficients);
        ordinal.extend(lat.ordinal_support.iter().map(|s| ordinal_log_prob(r.z1, eta + s, &theta.ordinal.cutpoints)));
    }
    let mut binary = Vec::with_capacity(patterns.binary.len() * k);
    for &i in &patterns.binary.representative {
        let r = &records[i];
        let mut eta = theta.binary.intercept + dot_selected(&r.x, &spec.binary_covariates, &theta.binary.coefficients);
        if let Some(c) = binary_cause(spec, r.z1) {
            eta += theta.binary.cause_coefficients[c];
        }
        binary.extend(lat.binary_support.iter().map(|s| {
            let t = eta + s;
            if r.z2 == 1 {
                log_sigmoid(t)
            } else {
                log_sigmoid(-t)
            }
        }));
    }

    let mut causes = vec![0.0; spec.outcome_cause_count()];
    let (mut resid, mut scratch) = (vec![0.0; d], vec![0.0; d]);
    let mut values = Vec::with_capacity(records.len() * k);
    for (i, record) in records.iter().enumerate() {
        let pred = record_predictors(record, spec, theta, &mut causes);
        let (go, gb) = (patterns.ordinal.of_record[i] * k, patterns.binary.of_record[i] * k);
        for c in 0..k {
            for (r, v) in resid.iter_mut().enumerate() {
                *v = pred.outcome_resid[r] - lat.outcome_support[c][r];
            }
            values.push(ordinal[go + c] + binary[gb + c] + factor.log_density(&resid, &mut scratch));
        }
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameters("NaN class log-likelihood".into()));
    }
    Ok(ClassLogLik::from_values(records.len(), k, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{class_log_lik_matrix, DataRecord};

    #[test]
    fn grouped_log_lik_matches_direct() {
        let spec = ModelSpec::full(2, 3, 1, 1);
        let records: Vec<DataRecord> = (0..40)
            .map(|i| DataRecord { x: vec![(i % 4) as f64], z1: 1 + i % 3, z2: (i % 2) as u8, y: vec![0.1 * i as f64] })
            .collect();
        let data = Dataset::with_generic_labels(records, 3).unwrap();
        let mut theta = ParameterSet::neutral(&spec);
        theta.ordinal.cutpoints = vec![0.0, -1.0];
        theta.ordinal.coefficients = vec![0.3];
        theta.binary.cause_coefficients = vec![0.2, -0.4];
        theta.latent.ordinal_support = vec![0.5, -0.5];
        theta.latent.outcome_support = vec![vec![1.0], vec![-1.0]];
        let patterns = DesignPatterns::new(&data, &spec);
        assert_eq!(patterns.ordinal.len(), 12);
        let a = class_log_lik_grouped(&data, &spec, &theta, &patterns).unwrap();
        let b = class_log_lik_matrix(&data, &spec, &theta).unwrap();
        for i in 0..data.len() {
            assert_eq!(a.row(i), b.row(i));
        }
    }
}
