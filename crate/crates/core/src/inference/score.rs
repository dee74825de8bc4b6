//! Score of the observed-data log-likelihood and the observed information.

use nalgebra::DMatrix;

use crate::em::e_step;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ordinal_term, sigmoid, Dataset, ModelSpec, ParameterSet};
#[cfg(test)]
use crate::model::FreeParameter;

/// Gradient of the log-likelihood in the free basis of [`ParameterSet::to_free`].
///
/// Uses the identity between the observed score and the gradient of the
/// expected complete-data log-likelihood with responsibilities held at their
/// values under `theta`.
pub fn score_vector(dataset: &Dataset, spec: &ModelSpec, theta: &ParameterSet) -> Result<Vec<f64>> {
    spec.check_dataset(dataset)?;
    theta.validate(spec)?;
    let post = e_step(dataset, spec, theta)?;
    let k = spec.classes;
    let d = spec.outcome_dim;
    let cats = spec.categories;
    let (po, pb, pg) = (spec.ordinal_covariates.len(), spec.binary_covariates.len(), spec.outcome_covariates.len());
    let (qb, qg) = (spec.binary_cause_count(), spec.outcome_cause_count());
    let lat = &theta.latent;
    let g = &theta.gaussian;
    let sigma_inv = {
        let factor = g.factor()?;
        DMatrix::from_row_slice(d, d, factor.inverse())
    };

    // gradients with respect to the natural parameters
    let mut g_class_ord = vec![0.0; k];
    let mut g_cut = vec![0.0; cats.saturating_sub(2)];
    let mut g_beta_ord = vec![0.0; po];
    let mut g_class_bin = vec![0.0; k];
    let mut g_beta_bin = vec![0.0; pb];
    let mut g_gamma = vec![0.0; qb];
    let mut g_class_out = vec![vec![0.0; d]; k];
    let mut g_phi = vec![vec![0.0; pg]; d];
    let mut g_psi = vec![vec![0.0; qg]; d];
    let mut cross = DMatrix::<f64>::zeros(d, d);

    let mut causes = vec![0.0; qg];
    let mut e = vec![0.0; d];
    for (i, r) in dataset.records().iter().enumerate() {
        let xo: f64 = spec.ordinal_covariates.iter().zip(&theta.ordinal.coefficients).map(|(&c, b)| r.x[c] * b).sum();
        let mut xb: f64 =
            spec.binary_covariates.iter().zip(&theta.binary.coefficients).map(|(&c, b)| r.x[c] * b).sum();
        let cause_col = if spec.binary_uses_ordinal { spec.ordinal_dummy_index(r.z1) } else { None };
        if let Some(c) = cause_col {
            xb += theta.binary.cause_coefficients[c];
        }
        spec.outcome_causes_into(r.z1, r.z2, &mut causes);
        let base: Vec<f64> = (0..d)
            .map(|t| {
                r.y[t]
                    - g.intercept[t]
                    - spec.outcome_covariates.iter().zip(&g.coefficients[t]).map(|(&c, b)| r.x[c] * b).sum::<f64>()
                    - causes.iter().zip(&g.cause_coefficients[t]).map(|(v, b)| v * b).sum::<f64>()
            })
            .collect();

        let (mut s_eta_ord, mut s_eta_bin) = (0.0, 0.0);
        let mut s_out = vec![0.0; d];
        for c in 0..k {
            let w = post.get(i, c);
            if w == 0.0 {
                continue;
            }
            let t = ordinal_term(r.z1, theta.ordinal.intercept + lat.ordinal_support[c] + xo, &theta.ordinal.cutpoints);
            let ge = w * (t.da + t.db);
            g_class_ord[c] += ge;
            s_eta_ord += ge;
            if r.z1 >= 3 {
                g_cut[r.z1 - 3] += w * t.da;
            }
            if r.z1 >= 2 && r.z1 < cats {
                g_cut[r.z1 - 2] += w * t.db;
            }

            let eta = theta.binary.intercept + lat.binary_support[c] + xb;
            let gb = w * (f64::from(r.z2) - sigmoid(eta));
            g_class_bin[c] += gb;
            s_eta_bin += gb;

            for t in 0..d {
                e[t] = base[t] - lat.outcome_support[c][t];
            }
            for a in 0..d {
                let s: f64 = (0..d).map(|b| sigma_inv[(a, b)] * e[b]).sum();
                g_class_out[c][a] += w * s;
                s_out[a] += w * s;
                for b in 0..d {
                    cross[(a, b)] += w * e[a] * e[b];
                }
            }
        }
        for (j, &col) in spec.ordinal_covariates.iter().enumerate() {
            g_beta_ord[j] += s_eta_ord * r.x[col];
        }
        for (j, &col) in spec.binary_covariates.iter().enumerate() {
            g_beta_bin[j] += s_eta_bin * r.x[col];
        }
        if let Some(c) = cause_col {
            g_gamma[c] += s_eta_bin;
        }
        for a in 0..d {
            for (j, &col) in spec.outcome_covariates.iter().enumerate() {
                g_phi[a][j] += s_out[a] * r.x[col];
            }
            for (j, v) in causes.iter().enumerate() {
                g_psi[a][j] += s_out[a] * v;
            }
        }
    }

    // d/dSigma of -W/2 log|Sigma| - 1/2 tr(Sigma^-1 S)
    let total = post.total();
    let grad_sigma = 0.5 * (&sigma_inv * (&cross - &theta.covariance_matrix() * total) * &sigma_inv);

    let mut out = Vec::with_capacity(crate::model::count_parameters(spec));
    out.push(g_class_ord.iter().sum());
    out.extend(&g_cut);
    out.extend(&g_beta_ord);
    out.push(g_class_bin.iter().sum());
    out.extend(&g_beta_bin);
    out.extend(&g_gamma);
    out.extend((0..d).map(|t| g_class_out.iter().map(|row| row[t]).sum::<f64>()));
    g_phi.iter().for_each(|row| out.extend(row));
    g_psi.iter().for_each(|row| out.extend(row));
    for a in 0..d {
        for b in 0..=a {
            out.push(if a == b { grad_sigma[(a, a)] } else { 2.0 * grad_sigma[(a, b)] });
        }
    }
    // class-1 support points are -sum_h (pi_h / pi_1) s_h
    let ratio: Vec<f64> = (0..k).map(|h| lat.weights[h] / lat.weights[0]).collect();
    out.extend((1..k).map(|h| g_class_ord[h] - ratio[h] * g_class_ord[0]));
    out.extend((1..k).map(|h| g_class_bin[h] - ratio[h] * g_class_bin[0]));
    for h in 1..k {
        out.extend((0..d).map(|t| g_class_out[h][t] - ratio[h] * g_class_out[0][t]));
    }
    let mass = post.column_sums();
    for h in 1..k {
        let through_support = g_class_ord[0] * lat.ordinal_support[h]
            + g_class_bin[0] * lat.binary_support[h]
            + (0..d).map(|t| g_class_out[0][t] * lat.outcome_support[h][t]).sum::<f64>();
        out.push(mass[h] - total * lat.weights[h] - ratio[h] * through_support);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameters("non-finite score".into()));
    }
    Ok(out)
}

/// Central-difference step for free coordinate value `v`.
pub(crate) fn fd_step(v: f64) -> f64 {
    1e-5 * (1.0 + v.abs())
}

/// Negative Jacobian of [`score_vector`] by central differences, symmetrized.
pub fn observed_information(dataset: &Dataset, spec: &ModelSpec, theta: &ParameterSet) -> Result<DMatrix<f64>> {
    let free = theta.to_free(spec)?;
    let m = free.len();
    let mut jac = DMatrix::<f64>::zeros(m, m);
    let mut probe = free.clone();
    for j in 0..m {
        let h = fd_step(free[j]);
        probe[j] = free[j] + h;
        let up = score_vector(dataset, spec, &ParameterSet::from_free(spec, &probe)?)?;
        probe[j] = free[j] - h;
        let down = score_vector(dataset, spec, &ParameterSet::from_free(spec, &probe)?)?;
        probe[j] = free[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac.neg_mut();
    linalg::symmetrize(&mut jac);
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::em::fixtures::two_class_data;
    use crate::model::{mixture_log_lik, DataRecord};

    fn fd_gradient(dataset: &Dataset, spec: &ModelSpec, free: &[f64]) -> Vec<f64> {
        let mut probe = free.to_vec();
        (0..free.len())
            .map(|j| {
                let h = 1e-5 * (1.0 + free[j].abs());
                probe[j] = free[j] + h;
                let up = mixture_log_lik(dataset, spec, &ParameterSet::from_free(spec, &probe).unwrap()).unwrap();
                probe[j] = free[j] - h;
                let down = mixture_log_lik(dataset, spec, &ParameterSet::from_free(spec, &probe).unwrap()).unwrap();
                probe[j] = free[j];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn score_matches_finite_differences() {
        let (data, spec, truth) = two_class_data(100, 11);
        let base = truth.to_free(&spec).unwrap();
        let layout = ParameterSet::free_layout(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for draw in 0..5 {
            let free: Vec<f64> = base
                .iter()
                .zip(&layout)
                .map(|(v, p)| match p {
                    // keep the cutpoints ordered and the covariance positive definite
                    FreeParameter::OrdinalCutpoint(_) | FreeParameter::Covariance(..) => *v,
                    _ => v + rng.random_range(-0.3..0.3),
                })
                .collect();
            let theta = ParameterSet::from_free(&spec, &free).unwrap();
            let analytic = score_vector(&data, &spec, &theta).unwrap();
            let numeric = fd_gradient(&data, &spec, &free);
            for j in 0..free.len() {
                let err = (analytic[j] - numeric[j]).abs() / (1.0 + numeric[j].abs());
                assert!(err < 1e-4, "draw {draw} {}: {} vs {}", layout[j], analytic[j], numeric[j]);
            }
        }
    }

    #[test]
    fn information_matches_hessian_of_log_likelihood() {
        let (data, spec, truth) = two_class_data(150, 2);
        let free = truth.to_free(&spec).unwrap();
        let info = observed_information(&data, &spec, &truth).unwrap();
        let m = free.len();
        let mut probe = free.clone();
        for j in 0..m {
            let h = 1e-4 * (1.0 + free[j].abs());
            probe[j] = free[j] + h;
            let up = fd_gradient(&data, &spec, &probe);
            probe[j] = free[j] - h;
            let down = fd_gradient(&data, &spec, &probe);
            probe[j] = free[j];
            for i in 0..m {
                let hess = (up[i] - down[i]) / (2.0 * h);
                let scale = 1.0 + info[(i, i)].abs().sqrt() * info[(j, j)].abs().sqrt();
                assert!((info[(i, j)] + hess).abs() < 1e-3 * scale, "({i},{j}) {} vs {}", info[(i, j)], -hess);
            }
        }
    }

    #[test]
    fn single_class_intercepts_have_closed_form_score_and_information() {
        // intercept-only equations: J = 2, no covariates, d = 1
        let mut spec = ModelSpec::full(1, 2, 0, 1);
        spec.binary_uses_ordinal = false;
        spec.outcome_uses_ordinal = false;
        spec.outcome_uses_binary = false;
        let z1 = [1, 2, 2, 1, 2];
        let z2 = [0u8, 1, 1, 1, 0];
        let y = [0.3, -1.2, 2.0, 0.4, 1.1];
        let records: Vec<DataRecord> = (0..5)
            .map(|i| DataRecord { x: vec![], z1: z1[i], z2: z2[i], y: vec![y[i]] })
            .collect();
        let data = Dataset::with_generic_labels(records, 2).unwrap();
        let mut theta = ParameterSet::neutral(&spec);
        theta.ordinal.intercept = 0.2;
        theta.binary.intercept = -0.4;
        theta.gaussian.intercept = vec![0.5];
        theta.gaussian.covariance = vec![vec![2.0]];
        let score = score_vector(&data, &spec, &theta).unwrap();
        let n = 5.0;
        let p1 = sigmoid(0.2);
        let p2 = sigmoid(-0.4);
        let n_high = 3.0;
        let n_one = 3.0;
        let sum_y: f64 = y.iter().sum();
        let ss: f64 = y.iter().map(|v| (v - 0.5) * (v - 0.5)).sum();
        assert!((score[0] - (n_high - n * p1)).abs() < 1e-12);
        assert!((score[1] - (n_one - n * p2)).abs() < 1e-12);
        assert!((score[2] - (sum_y - n * 0.5) / 2.0).abs() < 1e-12);
        assert!((score[3] - (ss / (2.0 * 4.0) - n / (2.0 * 2.0))).abs() < 1e-12);
        let info = observed_information(&data, &spec, &theta).unwrap();
        assert!((info[(0, 0)] - n * p1 * (1.0 - p1)).abs() < 1e-6);
        assert!((info[(1, 1)] - n * p2 * (1.0 - p2)).abs() < 1e-6);
        assert!((info[(2, 2)] - n / 2.0).abs() < 1e-6);
        assert!((info[(3, 3)] - (ss / 8.0 - n / 8.0)).abs() < 1e-5);
        assert!(info[(0, 1)].abs() < 1e-8);
    }
}
