//! CSV ingestion with row filters and category mapping.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{level_index, LevelSpec, SchemaConfig};
use crate::error::{Error, Result};

/// Value of an extra covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtraValue {
    Numeric(f64),
    /// Index into the covariate's levels.
    Level(usize),
}

/// One retained input row, categories as level indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRow {
    pub gestational_age: f64,
    pub birthweight: f64,
    pub age: f64,
    pub citizenship: usize,
    pub education: usize,
    pub marital: usize,
    pub extras: Vec<ExtraValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub rows_read: usize,
    pub kept: usize,
    pub dropped_missing: usize,
    pub dropped_gestational_age: usize,
    pub dropped_birthweight: usize,
    pub invalid: Vec<RowError>,
}

/// Retained rows with the schema that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceData {
    pub rows: Vec<SourceRow>,
    pub schema: SchemaConfig,
}

/// Share of invalid rows above which the whole file is rejected.
const MAX_INVALID_SHARE: f64 = 0.5;

fn is_missing(field: &str) -> bool {
    matches!(field, "" | "NA" | "na" | "NaN")
}

enum RowOutcome {
    Keep(SourceRow),
    Missing,
    ShortGestation,
    LowBirthweight,
}

struct ColumnIndex {
    gestational_age: usize,
    birthweight: usize,
    age: usize,
    citizenship: usize,
    education: usize,
    marital: usize,
    extras: Vec<usize>,
}

impl ColumnIndex {
    fn new(header: &csv::StringRecord, schema: &SchemaConfig) -> Result<Self> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Ingest(format!("missing column `{name}`")))
        };
        let c = &schema.columns;
        Ok(Self {
            gestational_age: find(&c.gestational_age)?,
            birthweight: find(&c.birthweight)?,
            age: find(&c.age)?,
            citizenship: find(&c.citizenship)?,
            education: find(&c.education)?,
            marital: find(&c.marital)?,
            extras: c.father_covariates.iter().map(|e| find(&e.column)).collect::<Result<_>>()?,
        })
    }
}

fn parse_row(record: &csv::StringRecord, cols: &ColumnIndex, schema: &SchemaConfig) -> std::result::Result<RowOutcome, String> {
    let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
    let c = &schema.columns;
    let mut all = vec![cols.gestational_age, cols.birthweight, cols.age, cols.citizenship, cols.education, cols.marital];
    all.extend(&cols.extras);
    if all.iter().any(|&i| is_missing(field(i))) {
        return Ok(RowOutcome::Missing);
    }
    let number = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let raw = field(i);
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("{name}: `{raw}` is not a number"))
    };
    let level = |i: usize, name: &str, levels: &[LevelSpec]| -> std::result::Result<usize, String> {
        let raw = field(i);
        level_index(levels, raw).ok_or_else(|| format!("{name}: unknown category `{raw}`"))
    };
    let gestational_age = number(cols.gestational_age, &c.gestational_age)?;
    let birthweight = number(cols.birthweight, &c.birthweight)?;
    let age = number(cols.age, &c.age)?;
    let cat = &schema.categories;
    let citizenship = level(cols.citizenship, &c.citizenship, &cat.citizenship)?;
    let education = level(cols.education, &c.education, &cat.education)?;
    let marital = level(cols.marital, &c.marital, &cat.marital)?;
    let mut extras = Vec::with_capacity(cols.extras.len());
    for (&i, spec) in cols.extras.iter().zip(&c.father_covariates) {
        extras.push(match &spec.levels {
            Some(levels) => ExtraValue::Level(level(i, &spec.column, levels)?),
            None => ExtraValue::Numeric(number(i, &spec.column)?),
        });
    }
    if gestational_age < schema.filters.min_gestational_weeks {
        return Ok(RowOutcome::ShortGestation);
    }
    if birthweight < schema.filters.min_birthweight_kg {
        return Ok(RowOutcome::LowBirthweight);
    }
    Ok(RowOutcome::Keep(SourceRow { gestational_age, birthweight, age, citizenship, education, marital, extras }))
}

/// Reads comma-separated records with a header row. Columns not mapped by
/// the schema, including any whose name starts with `_`, are ignored.
pub fn read_csv<R: Read>(reader: R, schema: &SchemaConfig) -> Result<(SourceData, IngestionReport)> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols = ColumnIndex::new(&header, schema)?;
    let mut report = IngestionReport::default();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        report.rows_read += 1;
        match parse_row(&record, &cols, schema) {
            Ok(RowOutcome::Keep(row)) => rows.push(row),
            Ok(RowOutcome::Missing) => report.dropped_missing += 1,
            Ok(RowOutcome::ShortGestation) => report.dropped_gestational_age += 1,
            Ok(RowOutcome::LowBirthweight) => report.dropped_birthweight += 1,
            Err(message) => report.invalid.push(RowError { row: i + 1, message }),
        }
    }
    report.kept = rows.len();
    if report.rows_read > 0 && report.invalid.len() as f64 > MAX_INVALID_SHARE * report.rows_read as f64 {
        let first = &report.invalid[0];
        return Err(Error::Ingest(format!(
            "{} of {} rows invalid (first: row {}: {})",
            report.invalid.len(),
            report.rows_read,
            first.row,
            first.message
        )));
    }
    if rows.is_empty() {
        return Err(Error::Ingest("no valid records".into()));
    }
    Ok((SourceData { rows, schema: schema.clone() }, report))
}

pub fn load_csv(path: &Path, schema: &SchemaConfig) -> Result<(SourceData, IngestionReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::Ingest(format!("cannot open {}: {e}", path.display())))?;
    read_csv(std::io::BufReader::new(file), schema)
}
