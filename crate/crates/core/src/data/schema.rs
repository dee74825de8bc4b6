//! Column mapping, category codings, filters and centering constants.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names of the CSV columns holding each analysis variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub gestational_age: String,
    pub birthweight: String,
    pub age: String,
    pub citizenship: String,
    pub education: String,
    pub marital: String,
    /// Extra covariates entering every equation.
    #[serde(default)]
    pub father_covariates: Vec<ExtraCovariate>,
}

/// An additional covariate; categorical when `levels` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraCovariate {
    pub column: String,
    #[serde(default)]
    pub levels: Option<Vec<LevelSpec>>,
    #[serde(default)]
    pub reference: Option<String>,
}

/// A category label with the raw values that map to it. A bare string
/// stands for a level whose only accepted value is the label itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelSpec {
    Label(String),
    Coded {
        label: String,
        #[serde(default)]
        codes: Vec<String>,
    },
}

impl LevelSpec {
    pub fn label(&self) -> &str {
        match self {
            Self::Label(l) | Self::Coded { label: l, .. } => l,
        }
    }

    fn accepts(&self, raw: &str) -> bool {
        match self {
            Self::Label(l) => l == raw,
            Self::Coded { label, codes } => label == raw || codes.iter().any(|c| c == raw),
        }
    }
}

/// Ordered levels of the three categorical variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categories {
    pub citizenship: Vec<LevelSpec>,
    /// In increasing order; the ordinal cause.
    pub education: Vec<LevelSpec>,
    /// Exactly two levels; the binary cause is 1 for the second.
    pub marital: Vec<LevelSpec>,
}

/// Reference levels, by label. The ordinal cause always uses its lowest level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub citizenship: String,
    pub marital: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Filters {
    pub min_gestational_weeks: f64,
    pub min_birthweight_kg: f64,
}

impl Default for Filters {
    fn default() -> Self {
        Self { min_gestational_weeks: 23.0, min_birthweight_kg: 0.5 }
    }
}

/// Centering constants for age and squared age; `None` means in-sample means.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CenteringConfig {
    #[serde(default)]
    pub age_mean: Option<f64>,
    #[serde(default)]
    pub age_sq_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub columns: ColumnMap,
    pub categories: Categories,
    pub references: References,
    #[serde(default)]
    pub filters: Filters,
    #[serde(default)]
    pub centering: CenteringConfig,
}

fn coded(label: &str, code: &str) -> LevelSpec {
    LevelSpec::Coded { label: label.into(), codes: vec![code.into()] }
}

impl Default for SchemaConfig {
    /// Column names equal to the variable names; labels or integer codes accepted.
    fn default() -> Self {
        Self {
            columns: ColumnMap {
                gestational_age: "gestational_age".into(),
                birthweight: "birthweight".into(),
                age: "age".into(),
                citizenship: "citizenship".into(),
                education: "education".into(),
                marital: "marital".into(),
                father_covariates: Vec::new(),
            },
            categories: Categories {
                citizenship: vec![coded("Italian", "1"), coded("east-Europe", "2"), coded("other", "3")],
                education: vec![
                    coded("middle school or less", "1"),
                    coded("high school", "2"),
                    coded("degree or above", "3"),
                ],
                marital: vec![coded("married", "0"), coded("not married", "1")],
            },
            references: References { citizenship: "Italian".into(), marital: "married".into() },
            filters: Filters::default(),
            centering: CenteringConfig::default(),
        }
    }
}

/// Position of the level accepting `raw`, if any.
pub(crate) fn level_index(levels: &[LevelSpec], raw: &str) -> Option<usize> {
    levels.iter().position(|l| l.accepts(raw))
}

fn reference_index(variable: &str, levels: &[LevelSpec], reference: &str) -> Result<usize> {
    levels
        .iter()
        .position(|l| l.label() == reference)
        .ok_or_else(|| Error::Schema(format!("reference `{reference}` is not a level of {variable}")))
}

impl SchemaConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))?;
        let schema: Self =
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.categories;
        for (name, levels, min) in
            [("citizenship", &c.citizenship, 1), ("education", &c.education, 2), ("marital", &c.marital, 2)]
        {
            if levels.len() < min {
                return Err(Error::Schema(format!("{name} needs at least {min} levels")));
            }
            check_distinct(name, levels)?;
        }
        if c.marital.len() != 2 {
            return Err(Error::Schema("marital must have exactly 2 levels".into()));
        }
        self.citizenship_reference()?;
        self.marital_reference()?;
        let f = &self.filters;
        if !(f.min_gestational_weeks > 0.0 && f.min_birthweight_kg > 0.0) {
            return Err(Error::Schema("filter thresholds must be positive".into()));
        }
        let mut seen = BTreeMap::new();
        for (role, col) in self.mapped_columns() {
            if let Some(other) = seen.insert(col.to_string(), role.clone()) {
                return Err(Error::Schema(format!("column `{col}` mapped to both {other} and {role}")));
            }
        }
        for extra in &self.columns.father_covariates {
            match (&extra.levels, &extra.reference) {
                (Some(levels), reference) => {
                    if levels.len() < 2 {
                        return Err(Error::Schema(format!("{} needs at least 2 levels", extra.column)));
                    }
                    check_distinct(&extra.column, levels)?;
                    if let Some(r) = reference {
                        reference_index(&extra.column, levels, r)?;
                    }
                }
                (None, Some(_)) => {
                    return Err(Error::Schema(format!("{}: reference given without levels", extra.column)));
                }
                (None, None) => {}
            }
        }
        Ok(())
    }

    pub fn citizenship_reference(&self) -> Result<usize> {
        reference_index("citizenship", &self.categories.citizenship, &self.references.citizenship)
    }

    pub fn marital_reference(&self) -> Result<usize> {
        reference_index("marital", &self.categories.marital, &self.references.marital)
    }

    /// Reference level of an extra categorical covariate (the first level by default).
    pub(crate) fn extra_reference(extra: &ExtraCovariate) -> Result<usize> {
        match (&extra.levels, &extra.reference) {
            (Some(levels), Some(r)) => reference_index(&extra.column, levels, r),
            _ => Ok(0),
        }
    }

    /// `(role, column)` for every mapped column.
    pub fn mapped_columns(&self) -> Vec<(String, &str)> {
        let c = &self.columns;
        let mut v = vec![
            ("gestational_age".to_string(), c.gestational_age.as_str()),
            ("birthweight".to_string(), c.birthweight.as_str()),
            ("age".to_string(), c.age.as_str()),
            ("citizenship".to_string(), c.citizenship.as_str()),
            ("education".to_string(), c.education.as_str()),
            ("marital".to_string(), c.marital.as_str()),
        ];
        v.extend(c.father_covariates.iter().map(|e| (format!("covariate {}", e.column), e.column.as_str())));
        v
    }
}

fn check_distinct(name: &str, levels: &[LevelSpec]) -> Result<()> {
    for (i, a) in levels.iter().enumerate() {
        if levels[..i].iter().any(|b| b.label() == a.label()) {
            return Err(Error::Schema(format!("{name}: duplicate level `{}`", a.label())));
        }
    }
    Ok(())
}
