//! Deterministic and random starting values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{m_step_binary, m_step_gaussian, m_step_ordinal, EmConfig, InnerConfig, WeightMatrix};
use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec, ParameterSet};

/// Standard deviation of the standard logistic distribution.
const LOGISTIC_SD: f64 = 1.813_799_364_234_217_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartStrategy {
    Deterministic,
    Random { seed: u64 },
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Equation-wise maximum likelihood fit with a single class.
pub fn fit_single_class(dataset: &Dataset, spec: &ModelSpec, inner: &InnerConfig) -> Result<ParameterSet> {
    let one = spec.with_classes(1);
    one.check_dataset(dataset)?;
    let n = dataset.len() as f64;
    let mut theta = ParameterSet::neutral(&one);

    // marginal cumulative proportions give the intercept and cutpoints
    let clamp = |p: f64| p.clamp(1e-3, 1.0 - 1e-3);
    let mut counts = vec![0.0; spec.categories + 1];
    for r in dataset.records() {
        counts[r.z1] += 1.0;
    }
    let at_least = |j: usize| counts[j..].iter().sum::<f64>() / n;
    let top = logit(clamp(at_least(2)));
    theta.ordinal.intercept = top;
    let mut prev = 0.0;
    for j in 3..=spec.categories {
        let c = (logit(clamp(at_least(j))) - top).min(prev - 1e-3);
        theta.ordinal.cutpoints[j - 2] = c;
        prev = c;
    }
    let ones = dataset.records().iter().filter(|r| r.z2 == 1).count() as f64;
    theta.binary.intercept = logit(clamp(ones / n));

    let w = WeightMatrix::constant(dataset.len(), 1, 1.0);
    let ord = m_step_ordinal(dataset, &one, &w, &theta.ordinal, &[0.0], inner)?;
    let bin = m_step_binary(dataset, &one, &w, &theta.binary, &[0.0], inner)?;
    let gau = m_step_gaussian(dataset, &one, &w)?;
    if gau.degenerate_covariance {
        return Err(Error::DegenerateCovariance("single-class residual covariance is singular".into()));
    }
    theta.ordinal = ord.params;
    theta.binary = bin.params;
    theta.gaussian = gau.params;
    Ok(theta)
}

/// Evenly spaced offsets in `[-1, 1]`.
fn offsets(k: usize) -> Vec<f64> {
    if k == 1 {
        vec![0.0]
    } else {
        (0..k).map(|c| -1.0 + 2.0 * c as f64 / (k - 1) as f64).collect()
    }
}

/// Expands a single-class fit into a `K`-class start.
///
/// Deterministic: outcome support points evenly spaced over `-1..1` residual
/// SDs, logit support points at zero, uniform weights. Spreading the logit
/// support points in the same class order as the outcome ones ties the start
/// to one sign pattern and often traps EM in a poor mode.
///
/// Random: the deterministic points plus uniform noise of width two residual
/// SDs (the logistic SD for the logit equations), weights from a flat
/// Dirichlet draw.
pub fn start_from_single_class(base: &ParameterSet, spec: &ModelSpec, strategy: StartStrategy) -> ParameterSet {
    let k = spec.classes;
    let d = spec.outcome_dim;
    let mut theta = base.clone();
    let outcome_sd: Vec<f64> = (0..d).map(|r| base.gaussian.covariance[r][r].sqrt()).collect();
    let off = offsets(k);
    theta.latent.ordinal_support = vec![0.0; k];
    theta.latent.binary_support = vec![0.0; k];
    theta.latent.outcome_support = off.iter().map(|t| outcome_sd.iter().map(|s| t * s).collect()).collect();
    theta.latent.weights = vec![1.0 / k as f64; k];

    if let StartStrategy::Random { seed } = strategy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = |scale: f64| scale * rng.random_range(-1.0..1.0);
        for c in 0..k {
            theta.latent.ordinal_support[c] += jitter(LOGISTIC_SD);
            theta.latent.binary_support[c] += jitter(LOGISTIC_SD);
            for r in 0..d {
                theta.latent.outcome_support[c][r] += jitter(outcome_sd[r]);
            }
        }
        let draws: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1).max(1e-12)).collect();
        let total: f64 = draws.iter().sum();
        theta.latent.weights = draws.iter().map(|v| v / total).collect();
    }
    theta.center_support_points()
}

pub fn initialize(dataset: &Dataset, spec: &ModelSpec, strategy: StartStrategy, config: &EmConfig) -> Result<ParameterSet> {
    let base = fit_single_class(dataset, spec, &config.inner())?;
    Ok(start_from_single_class(&base, spec, strategy))
}
