//! EM estimation: responsibilities, weighted M-steps, centering, multi-start.

mod binary;
mod gaussian;
mod init;
mod newton;
mod ordinal;
mod patterns;
mod posterior;
mod runner;

pub use binary::{m_step_binary, BinaryUpdate};
pub use gaussian::{m_step_gaussian, GaussianUpdate};
pub use init::{fit_single_class, initialize, start_from_single_class, StartStrategy};
pub use newton::DIVERGENCE_CAP;
pub use ordinal::{m_step_ordinal, OrdinalUpdate};
pub use posterior::{e_step, update_weights, PosteriorMatrix, WeightMatrix};
pub use runner::{derive_start_seed, fit_multistart, run_em, EmConfig, FitResult, StartSummary, MONOTONE_SLACK};

use serde::{Deserialize, Serialize};

/// Settings of the inner Newton fitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub max_iter: usize,
    pub tol: f64,
}

/// How an inner fitter finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitterOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// Some coefficient exceeded [`DIVERGENCE_CAP`] in magnitude (separation
    /// or a non-identified intercept).
    pub diverging: bool,
}

impl FitterOutcome {
    fn from_newton(out: &newton::NewtonOutcome) -> Self {
        Self { iterations: out.iterations, converged: out.converged, diverging: out.diverging }
    }
}
