//! Choice of the number of latent classes by BIC.

use serde::{Deserialize, Serialize};

use crate::em::{fit_multistart, EmConfig, FitResult};
use crate::error::{Error, Result};
use crate::model::{count_parameters, Dataset, ModelSpec};

pub fn bic(loglik: f64, n: usize, npar: usize) -> f64 {
    -2.0 * loglik + (n as f64).ln() * npar as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub k: usize,
    pub loglik: Option<f64>,
    pub npar: usize,
    pub bic: Option<f64>,
    pub converged: bool,
    pub degenerate: bool,
    pub error: Option<String>,
}

impl SelectionRow {
    fn usable(&self) -> bool {
        self.bic.is_some() && !self.degenerate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub n: usize,
    pub rows: Vec<SelectionRow>,
    pub chosen_k: Option<usize>,
}

impl SelectionTable {
    /// Table from already computed log-likelihoods, `(k, loglik, npar)`.
    pub fn from_logliks(n: usize, fits: &[(usize, f64, usize)]) -> Self {
        let rows = fits
            .iter()
            .map(|&(k, loglik, npar)| SelectionRow {
                k,
                loglik: Some(loglik),
                npar,
                bic: Some(bic(loglik, n, npar)),
                converged: true,
                degenerate: false,
                error: None,
            })
            .collect();
        let mut table = Self { n, rows, chosen_k: None };
        table.chosen_k = table.argmin();
        table
    }

    fn argmin(&self) -> Option<usize> {
        self.rows
            .iter()
            .filter(|r| r.usable())
            .min_by(|a, b| a.bic.unwrap().total_cmp(&b.bic.unwrap()))
            .map(|r| r.k)
    }
}

/// Fits K = 1, 2, ... with multistart EM and stops at the first increase
/// in BIC or at `k_max`. Returns the table and the fits by K.
pub fn select_k(
    dataset: &Dataset,
    spec: &ModelSpec,
    k_max: usize,
    config: &EmConfig,
) -> Result<(SelectionTable, Vec<(usize, FitResult)>)> {
    if k_max == 0 {
        return Err(Error::InvalidConfig("K must be ≥ 1".into()));
    }
    let n = dataset.len();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut previous: Option<f64> = None;
    for k in 1..=k_max {
        let spec_k = spec.with_classes(k);
        let npar = count_parameters(&spec_k);
        let row = match fit_multistart(dataset, &spec_k, config) {
            Ok(fit) => {
                let row = SelectionRow {
                    k,
                    loglik: Some(fit.loglik),
                    npar,
                    bic: Some(bic(fit.loglik, n, npar)),
                    converged: fit.converged,
                    degenerate: fit.is_degenerate(),
                    error: None,
                };
                fits.push((k, fit));
                row
            }
            Err(e) => {
                log::warn!("K = {k}: {e}");
                SelectionRow { k, loglik: None, npar, bic: None, converged: false, degenerate: false, error: Some(e.to_string()) }
            }
        };
        let current = row.bic.filter(|_| row.usable());
        rows.push(row);
        if let (Some(prev), Some(cur)) = (previous, current) {
            if cur > prev {
                break;
            }
        }
        if current.is_some() {
            previous = current;
        }
    }
    let mut table = SelectionTable { n, rows, chosen_k: None };
    table.chosen_k = table.argmin();
    if table.chosen_k.is_none() {
        return Err(Error::EstimationFailed(
            table.rows.iter().map(|r| format!("K = {}: {}", r.k, r.error.as_deref().unwrap_or("degenerate"))).collect(),
        ));
    }
    Ok((table, fits))
}
