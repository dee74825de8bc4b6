//! Forward simulation from a fitted or hand-built parameter set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::encode::{covariate_row, Centering};
use super::load::{ExtraValue, SourceData, SourceRow};
use super::schema::SchemaConfig;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{binary_prob, ordinal_category_probs, DataRecord, Dataset, DesignLabels, ModelSpec, ParameterSet};

/// Simulated records with the class each one was drawn from.
#[derive(Debug, Clone)]
pub struct SimulatedDesign {
    pub dataset: Dataset,
    /// 0-based true class per record.
    pub classes: Vec<usize>,
}

fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws class, causes and outcomes for each covariate row.
pub(crate) fn draw_records<R: Rng>(
    theta: &ParameterSet,
    spec: &ModelSpec,
    covariates: Vec<Vec<f64>>,
    rng: &mut R,
) -> Result<(Vec<DataRecord>, Vec<usize>)> {
    theta.validate(spec)?;
    let d = spec.outcome_dim;
    let chol = linalg::cholesky(&theta.covariance_matrix()).ok_or(Error::NotPositiveDefinite)?;
    let lower = chol.l();
    let mut causes = vec![0.0; spec.outcome_cause_count()];
    let mut records = Vec::with_capacity(covariates.len());
    let mut classes = Vec::with_capacity(covariates.len());
    let pick = |x: &[f64], idx: &[usize]| -> Vec<f64> { idx.iter().map(|&c| x[c]).collect() };
    for x in covariates {
        if x.len() != spec.n_covariates {
            return Err(Error::DimensionMismatch { context: "simulated covariates", expected: spec.n_covariates, actual: x.len() });
        }
        let k = categorical(rng, &theta.latent.weights);
        let probs = ordinal_category_probs(&pick(&x, &spec.ordinal_covariates), theta.latent.ordinal_support[k], &theta.ordinal)?;
        let z1 = categorical(rng, &probs) + 1;
        let p2 = binary_prob(&pick(&x, &spec.binary_covariates), z1, theta.latent.binary_support[k], &theta.binary, spec)?;
        let z2 = u8::from(rng.random::<f64>() < p2);
        spec.outcome_causes_into(z1, z2, &mut causes);
        let g = &theta.gaussian;
        let noise: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let y = (0..d)
            .map(|r| {
                let mean = g.intercept[r]
                    + theta.latent.outcome_support[k][r]
                    + spec.outcome_covariates.iter().zip(&g.coefficients[r]).map(|(&c, b)| x[c] * b).sum::<f64>()
                    + causes.iter().zip(&g.cause_coefficients[r]).map(|(v, b)| v * b).sum::<f64>();
                mean + (0..=r).map(|c| lower[(r, c)] * noise[c]).sum::<f64>()
            })
            .collect();
        records.push(DataRecord { x, z1, z2, y });
        classes.push(k);
    }
    Ok((records, classes))
}

/// Simulates from `theta` on fixed covariate rows. Identical inputs and seed
/// give identical output.
pub fn simulate_design(
    theta: &ParameterSet,
    spec: &ModelSpec,
    covariates: Vec<Vec<f64>>,
    labels: DesignLabels,
    seed: u64,
) -> Result<SimulatedDesign> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (records, classes) = draw_records(theta, spec, covariates, &mut rng)?;
    Ok(SimulatedDesign { dataset: Dataset::new(records, labels)?, classes })
}

/// Where simulated covariates come from.
#[derive(Debug, Clone, Copy)]
pub enum CovariateSource<'a> {
    /// Age ~ rounded Normal(30, 5.3) truncated to [15, 50]; citizenship
    /// levels with probabilities 0.80, 0.13, 0.07.
    Synthetic,
    /// Rows drawn with replacement from a reference dataset.
    Resample(&'a SourceData),
}

pub const SYNTHETIC_AGE_MEAN: f64 = 30.0;
pub const SYNTHETIC_AGE_SD: f64 = 5.3;
pub const SYNTHETIC_AGE_RANGE: (f64, f64) = (15.0, 50.0);
pub const SYNTHETIC_CITIZENSHIP: [f64; 3] = [0.80, 0.13, 0.07];

/// Simulated source rows with the class each was drawn from.
#[derive(Debug, Clone)]
pub struct SimulatedSource {
    pub data: SourceData,
    /// 0-based true class per row.
    pub classes: Vec<usize>,
}

/// Synthetic age draw, also used by tests that build designs by hand.
pub fn synthetic_age<R: Rng>(rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (SYNTHETIC_AGE_MEAN + SYNTHETIC_AGE_SD * z).round().clamp(SYNTHETIC_AGE_RANGE.0, SYNTHETIC_AGE_RANGE.1)
}

/// Simulates `n` rows in the layout read by [`super::load_csv`]. The design
/// is encoded with `centering`, normally that of the model `theta` came from.
pub fn simulate(
    theta: &ParameterSet,
    spec: &ModelSpec,
    schema: &SchemaConfig,
    centering: &Centering,
    n: usize,
    seed: u64,
    source: CovariateSource<'_>,
) -> Result<SimulatedSource> {
    if n == 0 {
        return Err(Error::InvalidConfig("number of simulated records must be positive".into()));
    }
    schema.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<SourceRow> = Vec::with_capacity(n);
    match source {
        CovariateSource::Synthetic => {
            if let Some(extra) = schema.columns.father_covariates.first() {
                return Err(Error::InvalidConfig(format!(
                    "no synthetic generator for `{}`; resample covariates from a dataset",
                    extra.column
                )));
            }
            if schema.categories.citizenship.len() != SYNTHETIC_CITIZENSHIP.len() {
                return Err(Error::InvalidConfig("synthetic covariates need exactly 3 citizenship levels".into()));
            }
            for _ in 0..n {
                let age = synthetic_age(&mut rng);
                let citizenship = categorical(&mut rng, &SYNTHETIC_CITIZENSHIP);
                rows.push(SourceRow {
                    gestational_age: 0.0,
                    birthweight: 0.0,
                    age,
                    citizenship,
                    education: 0,
                    marital: 0,
                    extras: Vec::new(),
                });
            }
        }
        CovariateSource::Resample(reference) => {
            if reference.rows.is_empty() {
                return Err(Error::InvalidData("no records to resample covariates from".into()));
            }
            for _ in 0..n {
                rows.push(reference.rows[rng.random_range(0..reference.rows.len())].clone());
            }
        }
    }
    let covariates = rows.iter().map(|r| covariate_row(r, schema, centering)).collect::<Result<Vec<_>>>()?;
    let (records, classes) = draw_records(theta, spec, covariates, &mut rng)?;
    let marital_ref = schema.marital_reference()?;
    let other = 1 - marital_ref;
    for (row, rec) in rows.iter_mut().zip(&records) {
        if rec.y.len() != 2 {
            return Err(Error::DimensionMismatch { context: "simulated outcomes", expected: 2, actual: rec.y.len() });
        }
        row.gestational_age = rec.y[0];
        row.birthweight = rec.y[1];
        row.education = rec.z1 - 1;
        row.marital = if rec.z2 == 1 { other } else { marital_ref };
    }
    Ok(SimulatedSource { data: SourceData { rows, schema: schema.clone() }, classes })
}

/// Name of the true-class column in simulated files.
pub const CLASS_COLUMN: &str = "_class";

/// Writes rows with the schema's column names and category labels, plus the
/// 1-based true class when given.
pub fn write_source_csv<W: std::io::Write>(data: &SourceData, classes: Option<&[usize]>, writer: W) -> Result<()> {
    let s = &data.schema;
    let c = &s.columns;
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> =
        vec![&c.gestational_age, &c.birthweight, &c.age, &c.citizenship, &c.education, &c.marital];
    header.extend(c.father_covariates.iter().map(|e| e.column.as_str()));
    if classes.is_some() {
        header.push(CLASS_COLUMN);
    }
    w.write_record(&header)?;
    for (i, r) in data.rows.iter().enumerate() {
        let cat = &s.categories;
        let mut rec = vec![
            r.gestational_age.to_string(),
            r.birthweight.to_string(),
            r.age.to_string(),
            cat.citizenship[r.citizenship].label().to_string(),
            cat.education[r.education].label().to_string(),
            cat.marital[r.marital].label().to_string(),
        ];
        for (v, extra) in r.extras.iter().zip(&c.father_covariates) {
            rec.push(match (v, &extra.levels) {
                (ExtraValue::Numeric(x), _) => x.to_string(),
                (ExtraValue::Level(l), Some(levels)) => levels[*l].label().to_string(),
                (ExtraValue::Level(l), None) => l.to_string(),
            });
        }
        if let Some(classes) = classes {
            rec.push((classes[i] + 1).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode_with_centering, read_csv};

    fn null_theta(spec: &ModelSpec) -> ParameterSet {
        let mut theta = ParameterSet::neutral(spec);
        theta.gaussian.intercept = vec![39.3, 3.26];
        theta
    }

    fn centering() -> Centering {
        Centering { age_mean: 30.0, age_sq_mean: 28.0 }
    }

    #[test]
    fn outcome_means_follow_the_intercepts() {
        let spec = ModelSpec::full(1, 3, 4, 2);
        let n = 5000;
        let sim = simulate(&null_theta(&spec), &spec, &SchemaConfig::default(), &centering(), n, 3, CovariateSource::Synthetic)
            .unwrap();
        let rows = &sim.data.rows;
        let m1 = rows.iter().map(|r| r.gestational_age).sum::<f64>() / n as f64;
        let m2 = rows.iter().map(|r| r.birthweight).sum::<f64>() / n as f64;
        let bound = 3.0 / (n as f64).sqrt();
        assert!((m1 - 39.3).abs() < bound && (m2 - 3.26).abs() < bound, "{m1} {m2}");
        let married = rows.iter().filter(|r| r.marital == 1).count() as f64 / n as f64;
        assert!((married - 0.5).abs() < 1.5 / (n as f64).sqrt(), "{married}");
        let ages_in_range = rows.iter().all(|r| (15.0..=50.0).contains(&r.age) && r.age.fract() == 0.0);
        assert!(ages_in_range);
    }

    #[test]
    fn class_frequencies_follow_the_weights() {
        let spec = ModelSpec::full(3, 3, 4, 2);
        let mut theta = null_theta(&spec);
        theta.latent.weights = vec![0.6, 0.25, 0.15];
        let n = 50_000;
        let sim = simulate(&theta, &spec, &SchemaConfig::default(), &centering(), n, 8, CovariateSource::Synthetic).unwrap();
        for (k, &p) in theta.latent.weights.iter().enumerate() {
            let f = sim.classes.iter().filter(|&&c| c == k).count() as f64 / n as f64;
            assert!((f - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "class {k}: {f}");
        }
    }

    #[test]
    fn same_seed_same_bytes_and_csv_round_trip() {
        let spec = ModelSpec::full(2, 3, 4, 2);
        let mut theta = null_theta(&spec);
        theta.latent.outcome_support = vec![vec![-1.0, -0.1], vec![1.0, 0.1]];
        let schema = SchemaConfig::default();
        let bytes = |seed| {
            let sim = simulate(&theta, &spec, &schema, &centering(), 200, seed, CovariateSource::Synthetic).unwrap();
            let mut out = Vec::new();
            write_source_csv(&sim.data, Some(&sim.classes), &mut out).unwrap();
            (sim, out)
        };
        let (sim, a) = bytes(4);
        assert_eq!(a, bytes(4).1);
        assert_ne!(a, bytes(5).1);
        let (back, report) = read_csv(a.as_slice(), &schema).unwrap();
        assert_eq!(report.kept, 200);
        assert_eq!(back.rows, sim.data.rows);
        let enc = encode_with_centering(&back, centering()).unwrap();
        assert_eq!(enc.dataset.records()[0].x[0], sim.data.rows[0].age - 30.0);
    }

    #[test]
    fn resampling_draws_reference_rows() {
        let spec = ModelSpec::full(1, 3, 4, 2);
        let schema = SchemaConfig::default();
        let reference = simulate(&null_theta(&spec), &spec, &schema, &centering(), 5, 1, CovariateSource::Synthetic).unwrap();
        let sim = simulate(&null_theta(&spec), &spec, &schema, &centering(), 50, 2, CovariateSource::Resample(&reference.data))
            .unwrap();
        for r in &sim.data.rows {
            assert!(reference.data.rows.iter().any(|q| q.age == r.age && q.citizenship == r.citizenship));
        }
    }

    #[test]
    fn zero_records_is_an_error() {
        let spec = ModelSpec::full(1, 3, 4, 2);
        assert!(simulate(&null_theta(&spec), &spec, &SchemaConfig::default(), &centering(), 0, 1, CovariateSource::Synthetic)
            .is_err());
    }
}
