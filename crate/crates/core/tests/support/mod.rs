#![allow(dead_code)]

use mixsem::data::{encode_with_centering, simulate, Centering, CovariateSource, SchemaConfig};
use mixsem::model::{BinaryEqParams, GaussianEqParams, LatentStructure, OrdinalEqParams};
use mixsem::{Dataset, ModelSpec, ParameterSet};
use nalgebra::{DMatrix, DVector};

pub const CENTERING: Centering = Centering { age_mean: 30.0, age_sq_mean: 28.09 };

/// Birth-outcome-scale coefficients; outcome supports several residual SDs
/// apart for K > 1.
pub fn truth(classes: usize) -> (ModelSpec, ParameterSet) {
    let spec = ModelSpec::full(classes, 3, 4, 2);
    let (ordinal_support, binary_support, outcome_support, weights) = match classes {
        1 => (vec![0.0], vec![0.0], vec![vec![0.0, 0.0]], vec![1.0]),
        2 => (vec![0.6, -0.6], vec![0.8, -0.8], vec![vec![-4.0, -0.8], vec![4.0, 0.8]], vec![0.6, 0.4]),
        _ => (
            vec![0.8, 0.0, -0.8],
            vec![1.0, 0.0, -1.0],
            vec![vec![-6.0, -1.2], vec![0.0, 0.0], vec![6.0, 0.8]],
            vec![0.6, 0.25, 0.15],
        ),
    };
    let theta = ParameterSet {
        ordinal: OrdinalEqParams {
            intercept: 2.053,
            cutpoints: vec![0.0, -2.695],
            coefficients: vec![0.103, -0.009, -0.806, -1.100],
        },
        binary: BinaryEqParams {
            intercept: -0.763,
            coefficients: vec![-0.027, 0.008, -0.679, -0.677],
            cause_coefficients: vec![-0.152, -0.468],
        },
        gaussian: GaussianEqParams {
            intercept: vec![39.346, 3.238],
            coefficients: vec![vec![-0.015, -0.001, -0.194, -0.112], vec![-0.004, -0.0002, 0.041, -0.031]],
            cause_coefficients: vec![vec![0.025, 0.029, 0.025], vec![0.023, 0.043, 0.011]],
            covariance: vec![vec![1.776, 0.248], vec![0.248, 0.171]],
        },
        latent: LatentStructure { ordinal_support, binary_support, outcome_support, weights },
    }
    .center_support_points();
    (spec, theta)
}

/// Simulated and encoded data with the true classes.
pub fn simulated(classes: usize, n: usize, seed: u64) -> (Dataset, ModelSpec, ParameterSet, Vec<usize>) {
    let (spec, theta) = truth(classes);
    let sim = simulate(&theta, &spec, &SchemaConfig::default(), &CENTERING, n, seed, CovariateSource::Synthetic).unwrap();
    let design = encode_with_centering(&sim.data, CENTERING).unwrap();
    (design.dataset, spec, theta, sim.classes)
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Maximizes `f` by Newton's method on finite-difference derivatives with
/// step halving. Independent of the library's fitters.
pub fn maximize(f: impl Fn(&[f64]) -> f64, x0: Vec<f64>) -> Vec<f64> {
    let m = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    for _ in 0..200 {
        let mut g = DVector::zeros(m);
        let mut h = DMatrix::zeros(m, m);
        let mut p = x.clone();
        for i in 0..m {
            let hi = 1e-5 * (1.0 + x[i].abs());
            p[i] = x[i] + hi;
            let up = f(&p);
            p[i] = x[i] - hi;
            let down = f(&p);
            p[i] = x[i];
            g[i] = (up - down) / (2.0 * hi);
            h[(i, i)] = (up - 2.0 * fx + down) / (hi * hi);
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let (hi, hj) = (1e-4 * (1.0 + x[i].abs()), 1e-4 * (1.0 + x[j].abs()));
                let mut e = |si: f64, sj: f64| {
                    p[i] = x[i] + si * hi;
                    p[j] = x[j] + sj * hj;
                    let v = f(&p);
                    p[i] = x[i];
                    p[j] = x[j];
                    v
                };
                let v = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * hi * hj);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let step = match (-h.clone()).cholesky() {
            Some(c) => c.solve(&g),
            None => g.clone() * 1e-3,
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc >= fx {
                x = cand;
                fx = fc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved || step.amax() * t < 1e-10 {
            break;
        }
    }
    x
}

/// Ordinal log-likelihood written out directly: `(intercept, cutpoints 2.., coefs)`.
pub fn ordinal_loglik(data: &Dataset, p: &[f64]) -> f64 {
    let j = data.categories();
    let mut cut = vec![0.0];
    cut.extend_from_slice(&p[1..j - 1]);
    if cut.windows(2).any(|w| w[1] > w[0]) {
        return f64::NEG_INFINITY;
    }
    let beta = &p[j - 1..];
    data.records()
        .iter()
        .map(|r| {
            let eta = p[0] + r.x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            let ge = |c: usize| if c <= 1 { 1.0 } else if c > j { 0.0 } else { sigmoid(eta + cut[c - 2]) };
            (ge(r.z1) - ge(r.z1 + 1)).ln()
        })
        .sum()
}

/// Binary log-likelihood with ordinal-cause dummies for categories 2..J.
pub fn binary_loglik(data: &Dataset, p: &[f64]) -> f64 {
    let q = data.n_covariates();
    data.records()
        .iter()
        .map(|r| {
            let mut eta = p[0] + r.x.iter().zip(&p[1..=q]).map(|(a, b)| a * b).sum::<f64>();
            if r.z1 >= 2 {
                eta += p[q + r.z1 - 1];
            }
            let pr = sigmoid(eta);
            if r.z2 == 1 {
                pr.ln()
            } else {
                (1.0 - pr).ln()
            }
        })
        .sum()
}

/// Least-squares coefficients of each outcome on (1, x, ordinal dummies,
/// binary cause) and the ML residual covariance.
pub fn outcome_least_squares(data: &Dataset) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = data.len();
    let j = data.categories();
    let q = data.n_covariates();
    let width = 1 + q + (j - 1) + 1;
    let design = DMatrix::from_fn(n, width, |i, c| {
        let r = &data.records()[i];
        if c == 0 {
            1.0
        } else if c <= q {
            r.x[c - 1]
        } else if c < width - 1 {
            f64::from(u8::from(r.z1 == c - q + 1))
        } else {
            f64::from(r.z2)
        }
    });
    let d = data.outcome_dim();
    let svd = design.clone().svd(true, true);
    let mut coefs = Vec::new();
    let mut resid = DMatrix::zeros(n, d);
    for o in 0..d {
        let y = DVector::from_fn(n, |i, _| data.records()[i].y[o]);
        let b = svd.solve(&y, 1e-12).unwrap();
        let e = &y - &design * &b;
        resid.set_column(o, &e);
        coefs.push(b.iter().copied().collect());
    }
    let s = resid.transpose() * &resid / n as f64;
    let sigma = (0..d).map(|a| (0..d).map(|b| s[(a, b)]).collect()).collect();
    (coefs, sigma)
}
