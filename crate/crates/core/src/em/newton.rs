//! Damped Newton-Raphson maximizer shared by the logit-type M-steps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Diagonal ridge added once when the negative Hessian is not positive definite.
pub(crate) const RIDGE: f64 = 1e-8;
/// Coefficient magnitude beyond which a logit fit is treated as diverging.
pub const DIVERGENCE_CAP: f64 = 30.0;
const MAX_HALVINGS: usize = 50;
/// Largest relative Newton step still counted as converged.
const STEP_RTOL: f64 = 1e-4;

pub(crate) trait Objective {
    fn dim(&self) -> usize;

    /// Value, gradient and full row-major Hessian at `theta`.
    fn evaluate(&self, theta: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64;

    fn feasible(&self, _theta: &[f64]) -> bool {
        true
    }

    /// Moves a trial point back into the feasible set.
    fn project(&self, _theta: &mut [f64]) {}
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diverging: bool,
}

pub(crate) fn maximize<O: Objective>(
    obj: &O,
    start: Vec<f64>,
    max_iter: usize,
    tol: f64,
    label: &'static str,
) -> Result<NewtonOutcome> {
    let p = obj.dim();
    let mut theta = start;
    let (mut grad, mut hess) = (vec![0.0; p], vec![0.0; p * p]);
    if !obj.feasible(&theta) {
        return Err(Error::InvalidParameters(format!("{label} fit started from an infeasible point")));
    }
    let mut value = obj.evaluate(&theta, &mut grad, &mut hess);
    if !value.is_finite() {
        return Err(Error::InvalidParameters(format!("{label} objective is not finite at the start")));
    }
    let (mut cand_grad, mut cand_hess) = (vec![0.0; p], vec![0.0; p * p]);
    let mut cand = vec![0.0; p];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let neg_h = DMatrix::from_fn(p, p, |i, j| -hess[i * p + j]);
        let g = DVector::from_column_slice(&grad);
        let step = linalg::solve_spd_with_ridge(&neg_h, &g, RIDGE).ok_or(Error::SingularHessian(label))?;
        let decrement = g.dot(&step);
        // a vanishing decrement with non-vanishing steps means the objective
        // flattens out toward infinity (separation), not convergence
        let short = step.iter().zip(&theta).all(|(s, th)| s.abs() <= STEP_RTOL * (1.0 + th.abs()));
        let small = decrement.abs() <= tol * (1.0 + value.abs()) && short;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            for ((c, th), s) in cand.iter_mut().zip(&theta).zip(step.iter()) {
                *c = th + t * s;
            }
            obj.project(&mut cand);
            if obj.feasible(&cand) {
                let v = obj.evaluate(&cand, &mut cand_grad, &mut cand_hess);
                if v.is_finite() && v >= value {
                    value = v;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            // no ascent direction left at working precision
            converged = short && decrement.abs() <= 1e-6 * (1.0 + value.abs());
            break;
        }
        std::mem::swap(&mut theta, &mut cand);
        std::mem::swap(&mut grad, &mut cand_grad);
        std::mem::swap(&mut hess, &mut cand_hess);
        if small {
            converged = true;
            break;
        }
        if theta.iter().any(|v| v.abs() > DIVERGENCE_CAP) {
            break;
        }
    }
    let diverging = theta.iter().any(|v| v.abs() > DIVERGENCE_CAP);
    Ok(NewtonOutcome { theta, iterations, converged, diverging })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// -(x - 1)^2 - 10 (y + 2)^2 + 0.1 x y
    struct Quad;

    impl Objective for Quad {
        fn dim(&self) -> usize {
            2
        }
        fn evaluate(&self, t: &[f64], g: &mut [f64], h: &mut [f64]) -> f64 {
            let (x, y) = (t[0], t[1]);
            g[0] = -2.0 * (x - 1.0) + 0.1 * y;
            g[1] = -20.0 * (y + 2.0) + 0.1 * x;
            h.copy_from_slice(&[-2.0, 0.1, 0.1, -20.0]);
            -(x - 1.0).powi(2) - 10.0 * (y + 2.0).powi(2) + 0.1 * x * y
        }
    }

    #[test]
    fn quadratic_in_one_step() {
        let out = maximize(&Quad, vec![5.0, 5.0], 10, 1e-12, "test").unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 2);
        // stationary point of the quadratic
        let det = 2.0 * 20.0 - 0.01;
        let x = (2.0 * 20.0 + 0.1 * -40.0) / det;
        let y = (-40.0 * 2.0 + 0.1 * 2.0) / det;
        assert!((out.theta[0] - x).abs() < 1e-12 && (out.theta[1] - y).abs() < 1e-12);
    }
}
