//! EM iterations and the multi-start driver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    fit_single_class, m_step_gaussian, start_from_single_class, update_weights, InnerConfig, PosteriorMatrix,
    StartStrategy,
};
use super::binary::m_step_binary_grouped;
use super::ordinal::m_step_ordinal_grouped;
use super::patterns::{class_log_lik_grouped, DesignPatterns};
use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec, ParameterSet};

/// Tolerated log-likelihood decrease between consecutive iterations.
pub const MONOTONE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    /// Threshold on `|l_t - l_{t-1}| / (|l_{t-1}| + 1)`.
    pub tol: f64,
    pub max_iter: usize,
    pub inner_max_iter: usize,
    pub inner_tol: f64,
    /// A class weight below this aborts the run as degenerate.
    pub weight_floor: f64,
    pub n_random_starts: usize,
    pub master_seed: u64,
    /// Worker threads for multi-start runs.
    pub threads: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
            inner_max_iter: 50,
            inner_tol: 1e-10,
            weight_floor: 1e-6,
            n_random_starts: 19,
            master_seed: 0,
            threads: 1,
        }
    }
}

impl EmConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 || self.inner_max_iter == 0 {
            return bad("iteration caps must be at least 1".into());
        }
        if !(self.inner_tol > 0.0) {
            return bad(format!("inner_tol must be positive, got {}", self.inner_tol));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 1.0 / classes.max(1) as f64) {
            return bad(format!("weight_floor must lie in (0, 1/K), got {}", self.weight_floor));
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn inner(&self) -> InnerConfig {
        InnerConfig { max_iter: self.inner_max_iter, tol: self.inner_tol }
    }
}

/// Final state of one start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start_id: usize,
    /// `None` for the deterministic start.
    pub seed: Option<u64>,
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: ParameterSet,
    pub loglik: f64,
    /// Log-likelihood of the start followed by one value per iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub start_id: usize,
    pub seed: Option<u64>,
    /// Class (0-based, before sorting) whose weight fell below the floor.
    pub degenerate_class: Option<usize>,
    /// Residual covariance became singular.
    pub degenerate_covariance: bool,
    /// An inner logit fit hit the coefficient cap.
    pub diverging: bool,
    pub warnings: Vec<String>,
    /// Every start of a multi-start run, ordered by id.
    pub starts: Vec<StartSummary>,
}

impl FitResult {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate_class.is_some() || self.degenerate_covariance
    }

    fn summary(&self) -> StartSummary {
        StartSummary {
            start_id: self.start_id,
            seed: self.seed,
            loglik: Some(self.loglik),
            iterations: self.iterations,
            converged: self.converged,
            degenerate: self.is_degenerate(),
            error: None,
        }
    }
}

fn max_relative_change(spec: &ModelSpec, old: &ParameterSet, new: &ParameterSet) -> f64 {
    match (old.to_free(spec), new.to_free(spec)) {
        (Ok(a), Ok(b)) => a.iter().zip(&b).map(|(x, y)| (y - x).abs() / (x.abs() + 1.0)).fold(0.0, f64::max),
        _ => f64::NAN,
    }
}

/// One EM run from `init`. Classes of the returned estimate are sorted by
/// the first outcome support point.
pub fn run_em(dataset: &Dataset, spec: &ModelSpec, init: ParameterSet, config: &EmConfig) -> Result<FitResult> {
    spec.validate()?;
    spec.check_dataset(dataset)?;
    config.validate(spec.classes)?;
    init.validate(spec)?;
    let inner = config.inner();
    let k = spec.classes;

    let mut theta = init.center_support_points();
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut diverging = false;
    let mut inner_stalled = false;
    let mut degenerate_class = None;
    let mut degenerate_covariance = false;
    let mut iterations = 0;

    let patterns = DesignPatterns::new(dataset, spec);
    let mut ll = class_log_lik_grouped(dataset, spec, &theta, &patterns)?;
    let mut loglik = ll.mixture_log_lik(&theta.latent.weights);
    if !loglik.is_finite() {
        return Err(Error::InvalidParameters("log-likelihood is not finite at the start".into()));
    }
    trace.push(loglik);

    while iterations < config.max_iter {
        iterations += 1;
        let posterior = PosteriorMatrix::from_class_log_lik(&ll, &theta.latent.weights)?;
        let weights = update_weights(&posterior);
        if let Some(c) = weights.iter().position(|&w| w < config.weight_floor) {
            warnings.push(format!("class {} weight {:.3e} fell below the floor at iteration {iterations}", c + 1, weights[c]));
            degenerate_class = Some(c);
            break;
        }
        let w = posterior.weights();
        let ord = m_step_ordinal_grouped(dataset, spec, &patterns.ordinal, w, &theta.ordinal, &theta.latent.ordinal_support, &inner)?;
        let bin = m_step_binary_grouped(dataset, spec, &patterns.binary, w, &theta.binary, &theta.latent.binary_support, &inner)?;
        let gau = m_step_gaussian(dataset, spec, w)?;
        if gau.degenerate_covariance {
            warnings.push(format!("residual covariance is singular at iteration {iterations}"));
            degenerate_covariance = true;
            break;
        }
        for (label, out) in [("ordinal", ord.outcome), ("binary", bin.outcome)] {
            if out.diverging && !diverging {
                warnings.push(format!("{label} fit diverging (|coefficient| > cap) at iteration {iterations}"));
            }
            if !out.converged && !inner_stalled {
                warnings.push(format!("{label} fit did not converge at iteration {iterations}"));
                inner_stalled = true;
            }
            diverging |= out.diverging;
        }

        let mut next = theta.clone();
        next.ordinal = ord.params;
        next.binary = bin.params;
        next.gaussian = gau.params;
        next.latent.ordinal_support = ord.support;
        next.latent.binary_support = bin.support;
        next.latent.outcome_support = gau.support;
        next.latent.weights = weights;
        let next = next.center_support_points();

        ll = class_log_lik_grouped(dataset, spec, &next, &patterns)?;
        let new_loglik = ll.mixture_log_lik(&next.latent.weights);
        if !new_loglik.is_finite() {
            return Err(Error::InvalidParameters(format!("log-likelihood is not finite at iteration {iterations}")));
        }
        if new_loglik < loglik - MONOTONE_SLACK * (1.0 + loglik.abs()) {
            warnings.push(format!("log-likelihood decreased by {:.3e} at iteration {iterations}", loglik - new_loglik));
        }
        if log::log_enabled!(log::Level::Debug) {
            log::debug!(
                "K={k} iteration {iterations}: loglik {new_loglik:.6}, max relative parameter change {:.3e}",
                max_relative_change(spec, &theta, &next)
            );
        }
        let change = (new_loglik - loglik).abs() / (loglik.abs() + 1.0);
        theta = next;
        loglik = new_loglik;
        trace.push(loglik);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    if !converged && degenerate_class.is_none() && !degenerate_covariance {
        warnings.push(format!("no convergence within {} iterations", config.max_iter));
    }

    let theta = theta.permute_classes(&theta.outcome_support_order());
    Ok(FitResult {
        theta,
        loglik,
        loglik_trace: trace,
        iterations,
        converged,
        start_id: 0,
        seed: None,
        degenerate_class,
        degenerate_covariance,
        diverging,
        warnings,
        starts: Vec::new(),
    })
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of random start `start_id` (ids start at 1; 0 is the deterministic start).
pub fn derive_start_seed(master_seed: u64, start_id: usize) -> u64 {
    splitmix64(master_seed.wrapping_add((start_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Deterministic start plus `n_random_starts` random starts; returns the
/// non-degenerate run with the highest log-likelihood (ties: lowest id).
///
/// With one class every random start would coincide with the deterministic
/// one, so only the deterministic start is run.
pub fn fit_multistart(dataset: &Dataset, spec: &ModelSpec, config: &EmConfig) -> Result<FitResult> {
    spec.validate()?;
    spec.check_dataset(dataset)?;
    config.validate(spec.classes)?;
    let base = fit_single_class(dataset, spec, &config.inner())
        .map_err(|e| Error::EstimationFailed(vec![format!("single-class start: {e}")]))?;
    let n_starts = if spec.classes == 1 { 1 } else { 1 + config.n_random_starts };

    let run = |id: usize| -> (Option<u64>, Result<FitResult>) {
        let seed = (id > 0).then(|| derive_start_seed(config.master_seed, id));
        let strategy = match seed {
            Some(seed) => StartStrategy::Random { seed },
            None => StartStrategy::Deterministic,
        };
        let init = start_from_single_class(&base, spec, strategy);
        let result = run_em(dataset, spec, init, config).map(|mut r| {
            r.start_id = id;
            r.seed = seed;
            r
        });
        (seed, result)
    };
    let outcomes: Vec<(Option<u64>, Result<FitResult>)> = if config.threads == 1 {
        (0..n_starts).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| (0..n_starts).into_par_iter().map(run).collect())
    };

    let mut starts = Vec::with_capacity(n_starts);
    let mut best: Option<FitResult> = None;
    for (id, (seed, outcome)) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(fit) => {
                starts.push(fit.summary());
                log::info!(
                    "K={} start {id}: loglik {:.6}, {} iterations{}",
                    spec.classes,
                    fit.loglik,
                    fit.iterations,
                    if fit.is_degenerate() { " (degenerate)" } else { "" }
                );
                if !fit.is_degenerate() && best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                log::info!("K={} start {id} failed: {e}", spec.classes);
                starts.push(StartSummary {
                    start_id: id,
                    seed,
                    loglik: None,
                    iterations: 0,
                    converged: false,
                    degenerate: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    match best {
        Some(mut fit) => {
            fit.starts = starts;
            Ok(fit)
        }
        None => Err(Error::EstimationFailed(
            starts
                .iter()
                .map(|s| match &s.error {
                    Some(e) => format!("start {}: {e}", s.start_id),
                    None => format!("start {}: degenerate", s.start_id),
                })
                .collect(),
        )),
    }
}
