use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{class_log_lik_matrix, ClassLogLik, Dataset, ModelSpec, ParameterSet};

/// Non-negative `n x K` weights on the class-expanded data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * k {
            return Err(Error::DimensionMismatch { context: "weight matrix", expected: n * k, actual: data.len() });
        }
        if data.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidData("weights must be finite and non-negative".into()));
        }
        Ok(Self { n, k, data })
    }

    pub(crate) fn from_parts(n: usize, k: usize, data: Vec<f64>) -> Self {
        Self { n, k, data }
    }

    pub fn constant(n: usize, k: usize, value: f64) -> Self {
        Self { n, k, data: vec![value; n * k] }
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.k + k]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.k];
        for row in self.data.chunks_exact(self.k) {
            for (a, w) in s.iter_mut().zip(row) {
                *a += w;
            }
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { n: self.n, k: self.k, data: self.data.iter().map(|w| w * factor).collect() }
    }
}

/// E-step responsibilities; every row sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMatrix(WeightMatrix);

impl Deref for PosteriorMatrix {
    type Target = WeightMatrix;

    fn deref(&self) -> &WeightMatrix {
        &self.0
    }
}

impl PosteriorMatrix {
    pub const ROW_SUM_TOL: f64 = 1e-12;

    pub fn from_rows(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        let w = WeightMatrix::new(n, k, data)?;
        for i in 0..n {
            let s: f64 = w.row(i).iter().sum();
            if (s - 1.0).abs() > Self::ROW_SUM_TOL {
                return Err(Error::InvalidData(format!("posterior row {} sums to {s}", i + 1)));
            }
        }
        Ok(Self(w))
    }

    /// Responsibilities `w_ik ∝ weights_k exp(l_ik)`, normalized per row with a
    /// max shift so the largest term is exactly `exp(0)`.
    pub fn from_class_log_lik(ll: &ClassLogLik, weights: &[f64]) -> Result<Self> {
        let k = ll.classes();
        let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let mut data = Vec::with_capacity(ll.rows() * k);
        let mut buf = vec![0.0; k];
        for i in 0..ll.rows() {
            let row = ll.row(i);
            let mut m = f64::NEG_INFINITY;
            for c in 0..k {
                buf[c] = row[c] + log_w[c];
                m = m.max(buf[c]);
            }
            if !m.is_finite() {
                return Err(Error::InvalidParameters(format!(
                    "record {} has zero likelihood under every class",
                    i + 1
                )));
            }
            let mut s = 0.0;
            for b in buf.iter_mut() {
                *b = (*b - m).exp();
                s += *b;
            }
            data.extend(buf.iter().map(|b| b / s));
        }
        Ok(Self(WeightMatrix { n: ll.rows(), k, data }))
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.0
    }
}

pub fn e_step(dataset: &Dataset, spec: &ModelSpec, theta: &ParameterSet) -> Result<PosteriorMatrix> {
    spec.check_dataset(dataset)?;
    theta.validate(spec)?;
    let ll = class_log_lik_matrix(dataset, spec, theta)?;
    PosteriorMatrix::from_class_log_lik(&ll, &theta.latent.weights)
}

/// Class weights as column means of the responsibilities.
pub fn update_weights(posterior: &PosteriorMatrix) -> Vec<f64> {
    let n = posterior.rows() as f64;
    posterior.column_sums().into_iter().map(|s| s / n).collect()
}
