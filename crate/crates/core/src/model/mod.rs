//! Domain types and per-class probability computations.

mod equations;
pub(crate) mod likelihood;
mod params;

pub use equations::{
    binary_prob, correlation_from_sigma, gaussian_log_density, log_sigmoid, ordinal_category_probs,
    ordinal_log_prob, sigmoid,
};
pub(crate) use equations::ordinal_term;
pub use likelihood::{
    class_conditional_log_lik, class_log_lik_matrix, count_parameters, log_sum_exp, mixture_log_lik,
    ClassLogLik,
};
pub use params::{
    BinaryEqParams, FreeParameter, GaussianEqParams, LatentStructure, OrdinalEqParams, ParameterSet,
    CENTERING_TOL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One analysis record: encoded covariates, the two causes and the outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub x: Vec<f64>,
    /// Ordinal cause, 1-based category.
    pub z1: usize,
    /// Binary cause, 0 or 1.
    pub z2: u8,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub variable: String,
    pub level: Option<String>,
}

impl ColumnLabel {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self { variable: name.into(), level: None }
    }

    pub fn dummy(name: impl Into<String>, level: impl Into<String>) -> Self {
        Self { variable: name.into(), level: Some(level.into()) }
    }
}

/// A categorical variable with its levels; `reference` indexes `levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorLabel {
    pub variable: String,
    pub levels: Vec<String>,
    pub reference: usize,
}

impl FactorLabel {
    pub fn reference_label(&self) -> &str {
        &self.levels[self.reference]
    }
}

/// Column metadata carried alongside a dataset and into result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignLabels {
    pub covariates: Vec<ColumnLabel>,
    /// Factors expanded into dummy columns of `covariates`.
    pub covariate_factors: Vec<FactorLabel>,
    pub ordinal: FactorLabel,
    pub binary: FactorLabel,
    pub outcomes: Vec<String>,
}

impl DesignLabels {
    /// Generic labels (`x1`, `x2`, ..., `z1`, `z2`, `y1`, ...) for programmatic datasets.
    pub fn generic(n_covariates: usize, categories: usize, outcome_dim: usize) -> Self {
        Self {
            covariates: (1..=n_covariates).map(|i| ColumnLabel::numeric(format!("x{i}"))).collect(),
            covariate_factors: Vec::new(),
            ordinal: FactorLabel {
                variable: "z1".into(),
                levels: (1..=categories).map(|j| j.to_string()).collect(),
                reference: 0,
            },
            binary: FactorLabel { variable: "z2".into(), levels: vec!["0".into(), "1".into()], reference: 0 },
            outcomes: (1..=outcome_dim).map(|i| format!("y{i}")).collect(),
        }
    }
}

/// Validated, immutable collection of records sharing dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<DataRecord>,
    labels: DesignLabels,
}

impl Dataset {
    pub fn new(records: Vec<DataRecord>, labels: DesignLabels) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::InvalidData("dataset must contain at least one record".into()))?;
        let p = labels.covariates.len();
        let d = labels.outcomes.len();
        let j = labels.ordinal.levels.len();
        if j < 2 {
            return Err(Error::InvalidData("ordinal cause needs at least 2 categories".into()));
        }
        if labels.binary.levels.len() != 2 {
            return Err(Error::InvalidData("binary cause needs exactly 2 levels".into()));
        }
        if first.x.len() != p || first.y.len() != d {
            return Err(Error::InvalidData(format!(
                "labels describe {p} covariates and {d} outcomes, record 1 has {} and {}",
                first.x.len(),
                first.y.len()
            )));
        }
        for (i, r) in records.iter().enumerate() {
            if r.x.len() != p || r.y.len() != d {
                return Err(Error::InvalidData(format!("record {} has inconsistent dimensions", i + 1)));
            }
            if r.z1 < 1 || r.z1 > j {
                return Err(Error::InvalidData(format!("record {}: z1 = {} outside 1..={j}", i + 1, r.z1)));
            }
            if r.z2 > 1 {
                return Err(Error::InvalidData(format!("record {}: z2 = {} not in {{0,1}}", i + 1, r.z2)));
            }
            if !r.x.iter().chain(&r.y).all(|v| v.is_finite()) {
                return Err(Error::InvalidData(format!("record {} has non-finite values", i + 1)));
            }
        }
        Ok(Self { records, labels })
    }

    pub fn with_generic_labels(records: Vec<DataRecord>, categories: usize) -> Result<Self> {
        let (p, d) = records.first().map_or((0, 0), |r| (r.x.len(), r.y.len()));
        Self::new(records, DesignLabels::generic(p, categories, d))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[DataRecord] {
        &self.records
    }

    pub fn labels(&self) -> &DesignLabels {
        &self.labels
    }

    pub fn n_covariates(&self) -> usize {
        self.labels.covariates.len()
    }

    pub fn outcome_dim(&self) -> usize {
        self.labels.outcomes.len()
    }

    pub fn categories(&self) -> usize {
        self.labels.ordinal.levels.len()
    }

    /// Every record repeated `times` times, in order.
    pub fn replicated(&self, times: usize) -> Self {
        let records = self.records.iter().flat_map(|r| std::iter::repeat_n(r.clone(), times)).collect();
        Self { records, labels: self.labels.clone() }
    }
}

/// Declarative description of the three-equation recursion
/// `z1 <- x`, `z2 <- x, z1`, `y <- x, z1, z2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Number of latent classes.
    pub classes: usize,
    /// Number of ordinal categories of the first cause.
    pub categories: usize,
    pub outcome_dim: usize,
    /// Width of the encoded covariate vector.
    pub n_covariates: usize,
    pub ordinal_covariates: Vec<usize>,
    pub binary_covariates: Vec<usize>,
    pub outcome_covariates: Vec<usize>,
    /// Ordinal cause dummies enter the binary equation.
    pub binary_uses_ordinal: bool,
    /// Ordinal cause dummies enter the outcome equation.
    pub outcome_uses_ordinal: bool,
    /// Binary cause enters the outcome equation.
    pub outcome_uses_binary: bool,
    /// 1-based ordinal category omitted from the dummy coding.
    pub ordinal_reference: usize,
}

impl ModelSpec {
    /// Every covariate in every equation, both causes feeding downstream.
    pub fn full(classes: usize, categories: usize, n_covariates: usize, outcome_dim: usize) -> Self {
        let all: Vec<usize> = (0..n_covariates).collect();
        Self {
            classes,
            categories,
            outcome_dim,
            n_covariates,
            ordinal_covariates: all.clone(),
            binary_covariates: all.clone(),
            outcome_covariates: all,
            binary_uses_ordinal: true,
            outcome_uses_ordinal: true,
            outcome_uses_binary: true,
            ordinal_reference: 1,
        }
    }

    pub fn for_dataset(dataset: &Dataset, classes: usize) -> Self {
        let mut spec = Self::full(classes, dataset.categories(), dataset.n_covariates(), dataset.outcome_dim());
        spec.ordinal_reference = dataset.labels().ordinal.reference + 1;
        spec
    }

    pub fn with_classes(&self, classes: usize) -> Self {
        Self { classes, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 1 {
            return Err(Error::InvalidSpec("K must be ≥ 1".into()));
        }
        if self.categories < 2 {
            return Err(Error::InvalidSpec("ordinal cause needs J >= 2".into()));
        }
        if self.outcome_dim < 1 {
            return Err(Error::InvalidSpec("outcome dimension must be >= 1".into()));
        }
        if self.ordinal_reference < 1 || self.ordinal_reference > self.categories {
            return Err(Error::InvalidSpec("ordinal reference category out of range".into()));
        }
        for (name, idx) in [
            ("ordinal", &self.ordinal_covariates),
            ("binary", &self.binary_covariates),
            ("outcome", &self.outcome_covariates),
        ] {
            if let Some(bad) = idx.iter().find(|&&c| c >= self.n_covariates) {
                return Err(Error::InvalidSpec(format!(
                    "{name} equation uses covariate {bad}, only {} available",
                    self.n_covariates
                )));
            }
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != idx.len() {
                return Err(Error::InvalidSpec(format!("{name} equation lists a covariate twice")));
            }
        }
        Ok(())
    }

    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        self.validate()?;
        if dataset.n_covariates() != self.n_covariates {
            return Err(Error::DimensionMismatch {
                context: "covariate width",
                expected: self.n_covariates,
                actual: dataset.n_covariates(),
            });
        }
        if dataset.outcome_dim() != self.outcome_dim {
            return Err(Error::DimensionMismatch {
                context: "outcome dimension",
                expected: self.outcome_dim,
                actual: dataset.outcome_dim(),
            });
        }
        if dataset.categories() != self.categories {
            return Err(Error::DimensionMismatch {
                context: "ordinal categories",
                expected: self.categories,
                actual: dataset.categories(),
            });
        }
        Ok(())
    }

    /// Number of ordinal-cause dummies (J - 1).
    pub fn ordinal_dummy_count(&self) -> usize {
        self.categories - 1
    }

    pub fn binary_cause_count(&self) -> usize {
        if self.binary_uses_ordinal {
            self.ordinal_dummy_count()
        } else {
            0
        }
    }

    pub fn outcome_cause_count(&self) -> usize {
        let mut q = 0;
        if self.outcome_uses_ordinal {
            q += self.ordinal_dummy_count();
        }
        if self.outcome_uses_binary {
            q += 1;
        }
        q
    }

    /// Reference-coded dummies of the ordinal cause, written into `out` (length J - 1).
    pub fn ordinal_dummies_into(&self, z1: usize, out: &mut [f64]) {
        let mut c = 0;
        for cat in 1..=self.categories {
            if cat == self.ordinal_reference {
                continue;
            }
            out[c] = if cat == z1 { 1.0 } else { 0.0 };
            c += 1;
        }
    }

    /// Categories in dummy-column order.
    pub fn ordinal_dummy_categories(&self) -> Vec<usize> {
        (1..=self.categories).filter(|&c| c != self.ordinal_reference).collect()
    }

    /// Dummy column index of category `z1`, or `None` for the reference.
    pub fn ordinal_dummy_index(&self, z1: usize) -> Option<usize> {
        if z1 == self.ordinal_reference {
            None
        } else if z1 < self.ordinal_reference {
            Some(z1 - 1)
        } else {
            Some(z1 - 2)
        }
    }

    /// Cause regressors of the outcome equation: ordinal dummies then the binary cause.
    pub fn outcome_causes_into(&self, z1: usize, z2: u8, out: &mut [f64]) {
        let mut off = 0;
        if self.outcome_uses_ordinal {
            let q = self.ordinal_dummy_count();
            self.ordinal_dummies_into(z1, &mut out[..q]);
            off = q;
        }
        if self.outcome_uses_binary {
            out[off] = f64::from(z2);
        }
    }
}
