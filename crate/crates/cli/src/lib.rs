//! `mixsem` subcommands. [`run`] returns the process exit code: 0 on
//! success, 1 on input or usage errors, 2 when estimation finished without
//! converging.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mixsem::data::{
    design_labels, encode_design, encode_with_centering, load_csv, render_report, simulate, write_atomic,
    write_source_csv, write_tables, CovariateSource, EncodedDesign, IngestionReport, ResultsFile, SchemaConfig,
};
use mixsem::em::{fit_multistart, EmConfig, FitResult};
use mixsem::inference::{classify, infer, select_k, SelectionTable};
use mixsem::model::ModelSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mixsem", version, about = "Finite mixture structural equation models fitted by EM")]
pub struct Cli {
    /// Increase log output (-v: per-start progress, -vv: per-iteration trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model with K latent classes.
    Fit(FitArgs),
    /// Fit K = 1, 2, ... and choose K by BIC.
    Select(SelectArgs),
    /// Simulate records from a fitted model.
    Simulate(SimulateArgs),
    /// Assign records to their most probable class.
    Classify(ClassifyArgs),
    /// Render coefficient and latent-structure tables from a results file.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema JSON; built-in column names and codings when omitted.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimationArgs {
    /// Total number of EM starts (one deterministic, the rest random).
    #[arg(long, default_value_t = 20)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative log-likelihood change that stops EM.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 1000)]
    pub max_iter: usize,
    /// Concurrent starts.
    #[arg(long, env = "MIXSEM_THREADS", default_value_t = 1)]
    pub threads: usize,
}

impl EstimationArgs {
    fn config(&self) -> Result<EmConfig, CliError> {
        if self.starts == 0 {
            return Err(CliError::input("--starts must be at least 1"));
        }
        Ok(EmConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            n_random_starts: self.starts - 1,
            master_seed: self.seed,
            threads: self.threads,
            ..EmConfig::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of latent classes.
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    /// Results JSON; coefficient CSVs are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long = "k-max")]
    pub k_max: usize,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    /// Selection table CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Results JSON of the model to simulate from.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Resample covariates from this CSV instead of generating them.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub params: PathBuf,
    /// Output directory for `report.txt` and the CSV tables.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    NotConverged,
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => EXIT_INPUT,
            Self::NotConverged => EXIT_NOT_CONVERGED,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Input(m) => f.write_str(m),
            Self::NotConverged => f.write_str("estimation did not converge; results written with the flag set"),
        }
    }
}

impl From<mixsem::Error> for CliError {
    fn from(e: mixsem::Error) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Input(e.to_string())
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // a second initialization (several runs in one process) is harmless
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

/// Parses arguments and runs one subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_schema(path: Option<&Path>) -> Result<SchemaConfig, CliError> {
    match path {
        Some(p) => Ok(SchemaConfig::from_path(p)?),
        None => Ok(SchemaConfig::default()),
    }
}

fn print_ingestion(path: &Path, report: &IngestionReport) {
    eprintln!(
        "{}: {} rows read, {} kept, {} dropped (missing {}, gestational age {}, birthweight {}), {} invalid",
        path.display(),
        report.rows_read,
        report.kept,
        report.rows_read - report.kept,
        report.dropped_missing,
        report.dropped_gestational_age,
        report.dropped_birthweight,
        report.invalid.len()
    );
    for e in report.invalid.iter().take(10) {
        eprintln!("  row {}: {}", e.row, e.message);
    }
}

fn load_design(args: &DataArgs) -> Result<EncodedDesign, CliError> {
    let schema = read_schema(args.schema.as_deref())?;
    let (source, report) = load_csv(&args.data, &schema)?;
    print_ingestion(&args.data, &report);
    let design = encode_design(&source)?;
    design.check_identifiable()?;
    Ok(design)
}

fn check_k(k: usize) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::input("K must be ≥ 1"));
    }
    Ok(())
}

fn print_fit(results: &ResultsFile) {
    let fit = &results.fit;
    println!("loglik = {:.6}", fit.loglik);
    println!("BIC = {:.6}", results.bic);
    println!("parameters = {}", results.npar);
    println!("iterations = {}", fit.iterations);
    println!("converged = {}", fit.converged);
    let weights: Vec<String> = fit.theta.latent.weights.iter().map(|w| format!("{w:.6}")).collect();
    println!("class weights = {}", weights.join(" "));
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
}

fn sibling_stem(out: &Path) -> (PathBuf, String) {
    let dir = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let stem = out.file_stem().map_or_else(|| "fit".to_string(), |s| s.to_string_lossy().into_owned());
    (dir, stem)
}

fn finish_fit(design: &EncodedDesign, spec: ModelSpec, fit: FitResult, config: EmConfig, out: &Path) -> Result<bool, CliError> {
    let inference = match infer(&design.dataset, &spec, &fit.theta) {
        Ok(r) => {
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            Some(r)
        }
        Err(e) => {
            eprintln!("warning: standard errors unavailable: {e}");
            None
        }
    };
    let converged = fit.converged;
    let results = ResultsFile::new(
        spec,
        design.dataset.labels().clone(),
        Some(design.centering),
        design.dataset.len(),
        fit,
        config,
        inference,
    );
    results.write(out)?;
    let (dir, stem) = sibling_stem(out);
    write_tables(&results, &dir, &stem)?;
    print_fit(&results);
    Ok(converged)
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    check_k(args.k)?;
    let config = args.estimation.config()?;
    let design = load_design(&args.data)?;
    let spec = design.model_spec(args.k)?;
    let fit = fit_multistart(&design.dataset, &spec, &config)?;
    if finish_fit(&design, spec, fit, config, &args.out)? {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}

/// Selection table as CSV with columns K, loglik, npar, BIC, converged.
pub fn selection_csv(table: &SelectionTable) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["K", "loglik", "npar", "BIC", "converged"])?;
    for row in &table.rows {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        w.write_record([row.k.to_string(), opt(row.loglik), row.npar.to_string(), opt(row.bic), row.converged.to_string()])?;
    }
    w.into_inner().map_err(|e| CliError::input(e.to_string()))
}

pub fn cmd_select(args: &SelectArgs) -> Result<(), CliError> {
    check_k(args.k_max)?;
    let config = args.estimation.config()?;
    let design = load_design(&args.data)?;
    let spec = design.model_spec(1)?;
    let (table, fits) = select_k(&design.dataset, &spec, args.k_max, &config)?;
    write_atomic(&args.out, &selection_csv(&table)?)?;
    println!("{:>3}  {:>14}  {:>5}  {:>14}  converged", "K", "loglik", "npar", "BIC");
    for row in &table.rows {
        let f = |v: Option<f64>| v.map_or_else(|| "--".to_string(), |x| format!("{x:.3}"));
        println!("{:>3}  {:>14}  {:>5}  {:>14}  {}", row.k, f(row.loglik), row.npar, f(row.bic), row.converged);
        if let Some(e) = &row.error {
            eprintln!("K = {}: {e}", row.k);
        }
    }
    let chosen = table.chosen_k.ok_or_else(|| CliError::input("no K could be fitted"))?;
    println!("chosen K = {chosen}");
    let converged = fits.iter().find(|(k, _)| *k == chosen).is_some_and(|(_, f)| f.converged);
    if converged {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::input("--n must be at least 1"));
    }
    let results = ResultsFile::read(&args.params)?;
    let schema = read_schema(args.schema.as_deref())?;
    check_labels(&results, &schema)?;
    let centering = results
        .centering
        .ok_or_else(|| CliError::input(format!("{}: no centering constants in params file", args.params.display())))?;
    let reference = match &args.covariates {
        Some(path) => {
            let (source, report) = load_csv(path, &schema)?;
            print_ingestion(path, &report);
            Some(source)
        }
        None => None,
    };
    let source = match &reference {
        Some(s) => CovariateSource::Resample(s),
        None => CovariateSource::Synthetic,
    };
    let sim = simulate(results.theta(), &results.spec, &schema, &centering, args.n, args.seed, source)?;
    let mut bytes = Vec::new();
    write_source_csv(&sim.data, Some(&sim.classes), &mut bytes)?;
    write_atomic(&args.out, &bytes)?;
    Ok(())
}

fn check_labels(results: &ResultsFile, schema: &SchemaConfig) -> Result<(), CliError> {
    let expected = design_labels(schema)?;
    if expected.covariates != results.labels.covariates {
        let names = |l: &mixsem::DesignLabels| {
            l.covariates
                .iter()
                .map(|c| match &c.level {
                    Some(level) => format!("{} {level}", c.variable),
                    None => c.variable.clone(),
                })
                .collect::<Vec<_>>()
                .join(", ")
        };
        return Err(CliError::input(format!(
            "params covariates [{}] do not match schema covariates [{}]",
            names(&results.labels),
            names(&expected)
        )));
    }
    if expected.ordinal.levels.len() != results.spec.categories {
        return Err(CliError::input(format!(
            "params have {} ordinal categories, schema has {}",
            results.spec.categories,
            expected.ordinal.levels.len()
        )));
    }
    Ok(())
}

pub fn cmd_classify(args: &ClassifyArgs) -> Result<(), CliError> {
    let results = ResultsFile::read(&args.params)?;
    let schema = read_schema(args.data.schema.as_deref())?;
    check_labels(&results, &schema)?;
    let (source, report) = load_csv(&args.data.data, &schema)?;
    print_ingestion(&args.data.data, &report);
    let design = match results.centering {
        Some(c) => encode_with_centering(&source, c)?,
        None => encode_design(&source)?,
    };
    results.spec.check_dataset(&design.dataset)?;
    let (posterior, assignments) = classify(&design.dataset, &results.spec, results.theta())?;
    let k = results.spec.classes;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string(), "class".to_string(), "confidence".to_string()];
    header.extend((1..=k).map(|c| format!("p{c}")));
    w.write_record(&header)?;
    for (i, a) in assignments.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string(), (a.class + 1).to_string(), a.confidence.to_string()];
        rec.extend(posterior.row(i).iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::input(e.to_string()))?;
    write_atomic(&args.out, &bytes)?;
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let results = ResultsFile::read(&args.params)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::input(format!("{}: {e}", args.out.display())))?;
    let text = render_report(&results);
    write_atomic(&args.out.join("report.txt"), text.as_bytes())?;
    write_tables(&results, &args.out, "report")?;
    print!("{text}");
    Ok(())
}
