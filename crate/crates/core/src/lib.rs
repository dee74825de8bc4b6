//! Finite mixture structural equation models with an ordinal cause, a binary
//! cause and a multivariate Gaussian outcome, estimated by EM over a discrete
//! latent class distribution.

pub mod data;
pub mod em;
pub mod error;
pub mod inference;
mod linalg;
pub mod model;

pub use error::{Error, Result};
pub use linalg::CovarianceFactor;
pub use model::{
    count_parameters, mixture_log_lik, DataRecord, Dataset, DesignLabels, ModelSpec, ParameterSet,
};
