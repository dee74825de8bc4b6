//! Versioned result files and coefficient tables.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encode::Centering;
use crate::em::{EmConfig, FitResult};
use crate::error::{Error, Result};
use crate::inference::{bic, InferenceReport, LatentDimension, Wald};
use crate::model::{count_parameters, DesignLabels, FreeParameter, ModelSpec, ParameterSet};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

/// Everything needed to report, reuse or simulate from a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub spec: ModelSpec,
    pub labels: DesignLabels,
    /// Age centering of the encoded design, when it came from a schema.
    pub centering: Option<Centering>,
    pub n: usize,
    pub loglik: f64,
    pub npar: usize,
    pub bic: f64,
    pub fit: FitResult,
    pub config: EmConfig,
    pub inference: Option<InferenceReport>,
}

impl ResultsFile {
    pub fn new(
        spec: ModelSpec,
        labels: DesignLabels,
        centering: Option<Centering>,
        n: usize,
        fit: FitResult,
        config: EmConfig,
        inference: Option<InferenceReport>,
    ) -> Self {
        let npar = count_parameters(&spec);
        Self {
            schema_version: RESULTS_SCHEMA_VERSION,
            loglik: fit.loglik,
            bic: bic(fit.loglik, n, npar),
            npar,
            spec,
            labels,
            centering,
            n,
            fit,
            config,
            inference,
        }
    }

    pub fn theta(&self) -> &ParameterSet {
        &self.fit.theta
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(RESULTS_SCHEMA_VERSION) => {}
            Some(v) => return Err(Error::InvalidData(format!("unsupported results schema version {v}"))),
            None => return Err(Error::InvalidData("results file has no schema_version".into())),
        }
        let file: Self = serde_json::from_value(value)?;
        file.spec.validate()?;
        file.fit.theta.validate(&file.spec)?;
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidData(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// One row of a coefficient table. Reference and fixed rows carry no SE.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub term: String,
    pub wald: Wald,
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub name: String,
    /// Block heading per row group, e.g. the outcome a row belongs to.
    pub rows: Vec<(String, TableRow)>,
}

fn wald_of(results: &ResultsFile, parameter: FreeParameter, estimate: f64) -> Wald {
    results
        .inference
        .as_ref()
        .and_then(|r| r.parameters.iter().find(|p| p.parameter == parameter))
        .map_or(Wald::new(estimate, None), |p| p.wald)
}

fn reference_row(term: String) -> TableRow {
    TableRow { term, wald: Wald::new(0.0, None), reference: true }
}

/// Covariate rows in design order, with a reference row before the first
/// dummy of each factor.
fn covariate_rows(
    results: &ResultsFile,
    columns: &[usize],
    coefficients: &[f64],
    parameter: impl Fn(usize) -> FreeParameter,
) -> Vec<TableRow> {
    let labels = &results.labels;
    let mut rows = Vec::new();
    let mut seen = Vec::new();
    for (c, (&col, &b)) in columns.iter().zip(coefficients).enumerate() {
        let label = &labels.covariates[col];
        if let Some(level) = &label.level {
            if !seen.contains(&label.variable) {
                seen.push(label.variable.clone());
                if let Some(f) = labels.covariate_factors.iter().find(|f| f.variable == label.variable) {
                    rows.push(reference_row(format!("{} {}", f.variable, f.reference_label())));
                }
            }
            rows.push(TableRow { term: format!("{} {level}", label.variable), wald: wald_of(results, parameter(c), b), reference: false });
        } else {
            rows.push(TableRow { term: label.variable.clone(), wald: wald_of(results, parameter(c), b), reference: false });
        }
    }
    rows
}

fn ordinal_cause_rows(results: &ResultsFile, coefficients: &[f64], parameter: impl Fn(usize) -> FreeParameter) -> Vec<TableRow> {
    let spec = &results.spec;
    let f = &results.labels.ordinal;
    let mut rows = vec![reference_row(format!("{} {}", f.variable, f.levels[spec.ordinal_reference - 1]))];
    for (c, (cat, &b)) in spec.ordinal_dummy_categories().iter().zip(coefficients).enumerate() {
        rows.push(TableRow { term: format!("{} {}", f.variable, f.levels[cat - 1]), wald: wald_of(results, parameter(c), b), reference: false });
    }
    rows
}

/// Tables for the ordinal, binary and outcome equations.
pub fn coefficient_tables(results: &ResultsFile) -> Vec<CoefficientTable> {
    let spec = &results.spec;
    let theta = results.theta();
    let labels = &results.labels;

    let o = &theta.ordinal;
    let mut rows = vec![TableRow { term: "intercept".into(), wald: wald_of(results, FreeParameter::OrdinalIntercept, o.intercept), reference: false }];
    rows.push(TableRow { term: "cutpoint 1".into(), wald: Wald::new(0.0, None), reference: true });
    for (j, &t) in o.cutpoints.iter().enumerate().skip(1) {
        rows.push(TableRow { term: format!("cutpoint {}", j + 1), wald: wald_of(results, FreeParameter::OrdinalCutpoint(j), t), reference: false });
    }
    rows.extend(covariate_rows(results, &spec.ordinal_covariates, &o.coefficients, FreeParameter::OrdinalCoefficient));
    let ordinal = CoefficientTable { name: labels.ordinal.variable.clone(), rows: rows.into_iter().map(|r| (String::new(), r)).collect() };

    let b = &theta.binary;
    let mut rows = vec![TableRow { term: "intercept".into(), wald: wald_of(results, FreeParameter::BinaryIntercept, b.intercept), reference: false }];
    rows.extend(covariate_rows(results, &spec.binary_covariates, &b.coefficients, FreeParameter::BinaryCoefficient));
    if spec.binary_uses_ordinal {
        rows.extend(ordinal_cause_rows(results, &b.cause_coefficients, FreeParameter::BinaryCause));
    }
    let binary = CoefficientTable { name: labels.binary.variable.clone(), rows: rows.into_iter().map(|r| (String::new(), r)).collect() };

    let g = &theta.gaussian;
    let mut out_rows = Vec::new();
    for (r, name) in labels.outcomes.iter().enumerate() {
        let mut rows = vec![TableRow {
            term: "intercept".into(),
            wald: wald_of(results, FreeParameter::OutcomeIntercept(r), g.intercept[r]),
            reference: false,
        }];
        rows.extend(covariate_rows(results, &spec.outcome_covariates, &g.coefficients[r], |c| {
            FreeParameter::OutcomeCoefficient { outcome: r, column: c }
        }));
        let causes = &g.cause_coefficients[r];
        let mut offset = 0;
        if spec.outcome_uses_ordinal {
            let q = spec.ordinal_dummy_count();
            rows.extend(ordinal_cause_rows(results, &causes[..q], |c| FreeParameter::OutcomeCause { outcome: r, column: c }));
            offset = q;
        }
        if spec.outcome_uses_binary {
            let f = &labels.binary;
            let other = 1 - f.reference;
            rows.push(reference_row(format!("{} {}", f.variable, f.reference_label())));
            rows.push(TableRow {
                term: format!("{} {}", f.variable, f.levels[other]),
                wald: wald_of(results, FreeParameter::OutcomeCause { outcome: r, column: offset }, causes[offset]),
                reference: false,
            });
        }
        out_rows.extend(rows.into_iter().map(|row| (name.clone(), row)));
    }
    let sigma = &g.covariance;
    for (r, name) in labels.outcomes.iter().enumerate() {
        out_rows.push((
            "covariance".into(),
            TableRow { term: format!("variance of {name}"), wald: wald_of(results, FreeParameter::Covariance(r, r), sigma[r][r]), reference: false },
        ));
    }
    for r in 0..labels.outcomes.len() {
        for c in 0..r {
            let (a, b) = (&labels.outcomes[c], &labels.outcomes[r]);
            out_rows.push((
                "covariance".into(),
                TableRow { term: format!("covariance {a}, {b}"), wald: wald_of(results, FreeParameter::Covariance(r, c), sigma[r][c]), reference: false },
            ));
            let rho = results
                .inference
                .as_ref()
                .and_then(|i| i.correlations.iter().find(|(rr, cc, _)| *rr == r && *cc == c))
                .map_or_else(|| Wald::new(sigma[r][c] / (sigma[r][r] * sigma[c][c]).sqrt(), None), |x| x.2);
            out_rows.push(("covariance".into(), TableRow { term: format!("correlation {a}, {b}"), wald: rho, reference: false }));
        }
    }
    let outcome = CoefficientTable { name: "outcomes".into(), rows: out_rows };
    vec![ordinal, binary, outcome]
}

/// Display name of a latent dimension.
pub fn dimension_name(labels: &DesignLabels, dimension: LatentDimension) -> String {
    match dimension {
        LatentDimension::Ordinal => format!("xi1 ({})", labels.ordinal.variable),
        LatentDimension::Binary => format!("xi2 ({})", labels.binary.variable),
        LatentDimension::Outcome(r) => format!("zeta{} ({})", r + 1, labels.outcomes[r]),
    }
}

/// One row of the latent-structure table: per class estimate, SE and,
/// for classes after the first, the p-value of the contrast with class 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTableRow {
    pub name: String,
    pub estimates: Vec<f64>,
    pub ses: Vec<Option<f64>>,
    pub contrast_p: Vec<Option<f64>>,
}

pub fn latent_table(results: &ResultsFile) -> Vec<LatentTableRow> {
    let spec = &results.spec;
    let theta = results.theta();
    let k = spec.classes;
    let se = |dim: Option<LatentDimension>, class: usize| {
        results
            .inference
            .as_ref()
            .and_then(|i| i.latent.iter().find(|l| l.dimension == dim && l.class == class))
            .and_then(|l| l.se)
    };
    let mut rows = Vec::new();
    for dim in LatentDimension::all(spec.outcome_dim) {
        let contrast_p = (0..k)
            .map(|class| {
                results
                    .inference
                    .as_ref()
                    .and_then(|i| i.contrasts.iter().find(|c| c.dimension == dim && c.class == class))
                    .and_then(|c| c.wald.p)
            })
            .collect();
        rows.push(LatentTableRow {
            name: dimension_name(&results.labels, dim),
            estimates: (0..k).map(|c| dim.support(theta, c)).collect(),
            ses: (0..k).map(|c| se(Some(dim), c)).collect(),
            contrast_p,
        });
    }
    rows.push(LatentTableRow {
        name: "pi".into(),
        estimates: theta.latent.weights.clone(),
        ses: (0..k).map(|c| se(None, c)).collect(),
        contrast_p: vec![None; k],
    });
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| x.to_string())
}

/// Writes `<stem>_<table>.csv` for every coefficient table and the latent table.
/// Returns the written paths.
pub fn write_tables(results: &ResultsFile, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
    let mut paths = Vec::new();
    for table in coefficient_tables(results) {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["block", "term", "estimate", "se", "t", "p"])?;
        for (block, row) in &table.rows {
            let est = if row.reference { "0".to_string() } else { row.wald.estimate.to_string() };
            w.write_record([block.clone(), row.term.clone(), est, opt(row.wald.se), opt(row.wald.t), opt(row.wald.p)])?;
        }
        let path = dir.join(format!("{stem}_{}.csv", table.name));
        write_atomic(&path, &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
        paths.push(path);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["parameter", "class", "estimate", "se", "contrast_p"])?;
    for row in latent_table(results) {
        for c in 0..row.estimates.len() {
            w.write_record([row.name.clone(), (c + 1).to_string(), row.estimates[c].to_string(), opt(row.ses[c]), opt(row.contrast_p[c])])?;
        }
    }
    let path = dir.join(format!("{stem}_latent.csv"));
    write_atomic(&path, &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    paths.push(path);
    Ok(paths)
}
