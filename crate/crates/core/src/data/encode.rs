//! Design encoding: centered age terms and reference-coded dummies.

use serde::{Deserialize, Serialize};

use super::load::{ExtraValue, SourceData, SourceRow};
use super::schema::{LevelSpec, SchemaConfig};
use crate::error::{Error, Result};
use crate::model::{ColumnLabel, DataRecord, Dataset, DesignLabels, FactorLabel, ModelSpec};

pub const AGE: &str = "age";
pub const AGE_SQUARED: &str = "age squared";
pub const CITIZENSHIP: &str = "citizenship";
pub const EDUCATION: &str = "education";
pub const MARITAL: &str = "marital";
pub const OUTCOMES: [&str; 2] = ["gestational_age", "birthweight"];

/// Constants subtracted from age and from squared centered age.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centering {
    pub age_mean: f64,
    pub age_sq_mean: f64,
}

impl Centering {
    /// In-sample means, unless the schema supplies them.
    pub fn resolve(rows: &[SourceRow], schema: &SchemaConfig) -> Self {
        let n = rows.len() as f64;
        let age_mean = schema.centering.age_mean.unwrap_or_else(|| rows.iter().map(|r| r.age).sum::<f64>() / n);
        let age_sq_mean = schema
            .centering
            .age_sq_mean
            .unwrap_or_else(|| rows.iter().map(|r| (r.age - age_mean).powi(2)).sum::<f64>() / n);
        Self { age_mean, age_sq_mean }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDesign {
    pub dataset: Dataset,
    pub centering: Centering,
    /// Factors with a single observed category.
    pub constant_columns: Vec<String>,
}

fn labels_of(levels: &[LevelSpec]) -> Vec<String> {
    levels.iter().map(|l| l.label().to_string()).collect()
}

fn push_dummies(labels: &mut Vec<ColumnLabel>, factor: &FactorLabel) {
    for (i, level) in factor.levels.iter().enumerate() {
        if i != factor.reference {
            labels.push(ColumnLabel::dummy(&factor.variable, level));
        }
    }
}

fn push_dummy_values(x: &mut Vec<f64>, levels: usize, reference: usize, value: usize) {
    for i in 0..levels {
        if i != reference {
            x.push(if i == value { 1.0 } else { 0.0 });
        }
    }
}

/// Labels of the encoded design implied by a schema.
pub fn design_labels(schema: &SchemaConfig) -> Result<DesignLabels> {
    let cat = &schema.categories;
    let citizenship = FactorLabel {
        variable: CITIZENSHIP.into(),
        levels: labels_of(&cat.citizenship),
        reference: schema.citizenship_reference()?,
    };
    let mut covariates = vec![ColumnLabel::numeric(AGE), ColumnLabel::numeric(AGE_SQUARED)];
    push_dummies(&mut covariates, &citizenship);
    let mut covariate_factors = vec![citizenship];
    for extra in &schema.columns.father_covariates {
        match &extra.levels {
            Some(levels) => {
                let factor = FactorLabel {
                    variable: extra.column.clone(),
                    levels: labels_of(levels),
                    reference: SchemaConfig::extra_reference(extra)?,
                };
                push_dummies(&mut covariates, &factor);
                covariate_factors.push(factor);
            }
            None => covariates.push(ColumnLabel::numeric(&extra.column)),
        }
    }
    Ok(DesignLabels {
        covariates,
        covariate_factors,
        ordinal: FactorLabel { variable: EDUCATION.into(), levels: labels_of(&cat.education), reference: 0 },
        binary: FactorLabel { variable: MARITAL.into(), levels: labels_of(&cat.marital), reference: schema.marital_reference()? },
        outcomes: OUTCOMES.iter().map(|s| s.to_string()).collect(),
    })
}

/// Encoded covariate vector of one source row.
pub fn covariate_row(row: &SourceRow, schema: &SchemaConfig, centering: &Centering) -> Result<Vec<f64>> {
    let age = row.age - centering.age_mean;
    let mut x = vec![age, age * age - centering.age_sq_mean];
    push_dummy_values(&mut x, schema.categories.citizenship.len(), schema.citizenship_reference()?, row.citizenship);
    for (value, extra) in row.extras.iter().zip(&schema.columns.father_covariates) {
        match (value, &extra.levels) {
            (ExtraValue::Numeric(v), None) => x.push(*v),
            (ExtraValue::Level(l), Some(levels)) => {
                push_dummy_values(&mut x, levels.len(), SchemaConfig::extra_reference(extra)?, *l)
            }
            _ => return Err(Error::Schema(format!("value of `{}` does not match its declared kind", extra.column))),
        }
    }
    Ok(x)
}

/// Binary cause of a marital level: 1 for the non-reference level.
pub fn binary_code(marital: usize, reference: usize) -> u8 {
    u8::from(marital != reference)
}

pub fn encode_design(source: &SourceData) -> Result<EncodedDesign> {
    let centering = Centering::resolve(&source.rows, &source.schema);
    encode_with_centering(source, centering)
}

/// Encoding with fixed centering constants, e.g. those of a fitted model.
pub fn encode_with_centering(source: &SourceData, centering: Centering) -> Result<EncodedDesign> {
    let schema = &source.schema;
    if source.rows.is_empty() {
        return Err(Error::InvalidData("no records to encode".into()));
    }
    let labels = design_labels(schema)?;
    let marital_ref = schema.marital_reference()?;
    let records = source
        .rows
        .iter()
        .map(|r| {
            Ok(DataRecord {
                x: covariate_row(r, schema, &centering)?,
                z1: r.education + 1,
                z2: binary_code(r.marital, marital_ref),
                y: vec![r.gestational_age, r.birthweight],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut constant_columns = Vec::new();
    if single(source.rows.iter().map(|r| r.citizenship)) {
        constant_columns.push(CITIZENSHIP.to_string());
    }
    for (j, extra) in schema.columns.father_covariates.iter().enumerate() {
        if extra.levels.is_some()
            && single(source.rows.iter().map(|r| match r.extras[j] {
                ExtraValue::Level(l) => l,
                ExtraValue::Numeric(_) => 0,
            }))
        {
            constant_columns.push(extra.column.clone());
        }
    }
    if single(source.rows.iter().map(|r| r.education)) {
        constant_columns.push(EDUCATION.to_string());
    }
    if single(source.rows.iter().map(|r| r.marital)) {
        constant_columns.push(MARITAL.to_string());
    }
    Ok(EncodedDesign { dataset: Dataset::new(records, labels)?, centering, constant_columns })
}

fn single(mut values: impl Iterator<Item = usize>) -> bool {
    let first = values.next();
    values.all(|v| Some(v) == first)
}

impl EncodedDesign {
    /// Errors naming the first factor observed at a single level.
    pub fn check_identifiable(&self) -> Result<()> {
        match self.constant_columns.first() {
            Some(c) => Err(Error::ConstantFactor(c.clone())),
            None => Ok(()),
        }
    }

    /// Every covariate in every equation, both causes downstream.
    pub fn model_spec(&self, classes: usize) -> Result<ModelSpec> {
        self.check_identifiable()?;
        let spec = ModelSpec::for_dataset(&self.dataset, classes);
        spec.validate()?;
        Ok(spec)
    }

    /// Category labels of record `i`: covariate factors in label order,
    /// then the ordinal and the binary cause.
    pub fn decode(&self, i: usize) -> Vec<(String, String)> {
        decode_record(self.dataset.labels(), &self.dataset.records()[i])
    }
}

/// Category labels recovered from an encoded record.
pub fn decode_record(labels: &DesignLabels, record: &DataRecord) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for factor in &labels.covariate_factors {
        let hit = labels
            .covariates
            .iter()
            .zip(&record.x)
            .find(|(c, v)| c.variable == factor.variable && c.level.is_some() && **v == 1.0)
            .and_then(|(c, _)| c.level.clone());
        out.push((factor.variable.clone(), hit.unwrap_or_else(|| factor.reference_label().to_string())));
    }
    out.push((labels.ordinal.variable.clone(), labels.ordinal.levels[record.z1 - 1].clone()));
    let b = &labels.binary;
    let level = if record.z2 == 0 { b.reference } else { (0..2).find(|&l| l != b.reference).unwrap_or(1) };
    out.push((b.variable.clone(), b.levels[level].clone()));
    out
}
