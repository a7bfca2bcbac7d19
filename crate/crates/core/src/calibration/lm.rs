//! Box-constrained Levenberg-Marquardt with finite-difference Jacobians.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Bounds;
use crate::error::Result;
use crate::sum::stable_sum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSettings {
    pub max_iterations: usize,
    pub lambda0: f64,
    /// Stop when the largest gradient component falls below this.
    pub gradient_tol: f64,
    /// Stop when an accepted step is shorter than this (Euclidean norm).
    pub step_tol: f64,
    /// Relative finite-difference step: `h = fd_step · (1 + |p|)`.
    pub fd_step: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self { max_iterations: 100, lambda0: 1e-3, gradient_tol: 1e-8, step_tol: 1e-10, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStop {
    Gradient,
    Step,
    /// Damping grew without finding a descent step.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Residual norm at the start and after each accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: LmStop,
}

const MAX_LAMBDA: f64 = 1e16;

/// Minimizes `‖r(p)‖²` from `start` (projected onto `bounds`).
///
/// Each iteration builds a forward-difference Jacobian (backward at an
/// upper bound), then solves `(JᵀJ + λ diag(JᵀJ)) δ = −Jᵀr` by Cholesky.
/// The projected trial point is accepted iff it lowers the residual norm,
/// which divides `λ` by 10; otherwise `λ` is multiplied by 10, as it is
/// when the damped system is not positive definite. The sums forming
/// `JᵀJ` and `Jᵀr` are order-independent, so permuting the residuals does
/// not change the trajectory.
pub fn levenberg_marquardt<F>(f: F, start: &[f64], bounds: &Bounds, settings: &LmSettings) -> Result<LmResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let n = bounds.len();
    let mut x = bounds.project(start);
    let mut r = f(&x)?;
    let mut evaluations = 1;
    let mut norm2 = sum_sq(&r);
    let mut history = vec![norm2.sqrt()];
    let mut lambda = settings.lambda0;
    let mut stop = LmStop::MaxIterations;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        let columns = (0..n)
            .into_par_iter()
            .map(|k| -> Result<Vec<f64>> {
                let h = settings.fd_step * (1.0 + x[k].abs());
                let mut y = x.clone();
                y[k] = if x[k] + h <= bounds.upper[k] { x[k] + h } else { x[k] - h };
                let step = y[k] - x[k];
                let ry = f(&y)?;
                Ok(ry.iter().zip(&r).map(|(a, b)| (a - b) / step).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        evaluations += n;
        let mut jtj = DMatrix::<f64>::zeros(n, n);
        let mut g = DVector::<f64>::zeros(n);
        for a in 0..n {
            g[a] = dot(&columns[a], &r);
            for b in a..n {
                let v = dot(&columns[a], &columns[b]);
                jtj[(a, b)] = v;
                jtj[(b, a)] = v;
            }
        }
        if g.amax() < settings.gradient_tol {
            stop = LmStop::Gradient;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        let mut tiny_step = false;
        while lambda <= MAX_LAMBDA {
            let mut damped = jtj.clone();
            for k in 0..n {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let trial: Vec<f64> = bounds.project(&x.iter().zip(delta.iter()).map(|(a, d)| a + d).collect::<Vec<_>>());
            let step = trial.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if step < settings.step_tol {
                tiny_step = true;
                break;
            }
            let rt = f(&trial)?;
            evaluations += 1;
            let nt = sum_sq(&rt);
            if nt < norm2 {
                x = trial;
                r = rt;
                norm2 = nt;
                history.push(norm2.sqrt());
                lambda = (lambda / 10.0).max(1e-300);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if tiny_step {
            stop = LmStop::Step;
            break;
        }
        if !accepted {
            stop = LmStop::Stalled;
            break;
        }
    }
    Ok(LmResult { params: x, residuals: r, history, iterations, evaluations, stop })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut terms: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    stable_sum(&mut terms)
}

fn sum_sq(r: &[f64]) -> f64 {
    dot(r, r)
}
