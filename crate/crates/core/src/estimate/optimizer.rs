//! Quasi-Newton maximizer: BFGS secant updates on the inverse Hessian with a
//! backtracking Armijo line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, SquareMatrix};

const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-16;
const CURVATURE_GUARD: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the gradient max-norm.
    pub gradient_tolerance: f64,
    /// Hard cap on |parameter|; exceeding it is diagnosed as perfect
    /// separation (the likelihood improves without bound).
    pub beta_cap: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { max_iterations: 300, gradient_tolerance: 1e-6, beta_cap: 50.0 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes `objective` (which returns value and gradient) from `x0`.
///
/// `names` label the coordinates for separation diagnostics. Returns a
/// non-converged outcome rather than an error when the iteration budget runs
/// out; errors are reserved for separation and objective failures.
pub fn maximize<F>(
    objective: F,
    x0: Vec<f64>,
    names: &[String],
    config: &OptimConfig,
) -> Result<OptimOutcome>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0;
    let (mut value, mut grad) = objective(&x)?;
    let mut inv_hessian = identity(n);
    let mut iterations = 0;
    let mut stalled = 0usize;

    while iterations < config.max_iterations {
        if max_norm(&grad) < config.gradient_tolerance {
            return Ok(OptimOutcome { x, value, gradient: grad, iterations, converged: true });
        }
        iterations += 1;

        // Ascent direction d = H * grad; fall back to steepest ascent if the
        // secant approximation has lost positive definiteness.
        let mut direction = mat_vec(&inv_hessian, &grad);
        let mut slope = dot(&grad, &direction);
        if slope.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !slope.is_finite() {
            inv_hessian = identity(n);
            direction = grad.clone();
            slope = dot(&grad, &direction);
        }

        // Backtracking Armijo search on the ascent value.
        let mut step = 1.0;
        let (new_x, new_value, new_grad) = loop {
            let candidate: Vec<f64> =
                x.iter().zip(&direction).map(|(xi, di)| xi + step * di).collect();
            let (cand_value, cand_grad) = objective(&candidate)?;
            if cand_value >= value + ARMIJO_C1 * step * slope {
                break (candidate, cand_value, cand_grad);
            }
            step *= 0.5;
            if step < MIN_STEP {
                // No improving step exists at this scale; report the current
                // point with its convergence status.
                let converged = max_norm(&grad) < config.gradient_tolerance;
                return Ok(OptimOutcome { x, value, gradient: grad, iterations, converged });
            }
        };

        if let Some(worst) = new_x.iter().position(|xi| xi.abs() > config.beta_cap) {
            let parameter =
                names.get(worst).cloned().unwrap_or_else(|| format!("parameter {worst}"));
            return Err(Error::Separation { parameter, cap: config.beta_cap });
        }

        // Improvements at the objective's noise floor cannot move the
        // gradient any further; stop burning the iteration budget.
        if new_value - value <= 1e-12 * (1.0 + value.abs()) {
            stalled += 1;
            if stalled >= 3 {
                let converged = max_norm(&new_grad) < config.gradient_tolerance;
                return Ok(OptimOutcome {
                    x: new_x,
                    value: new_value,
                    gradient: new_grad,
                    iterations,
                    converged,
                });
            }
        } else {
            stalled = 0;
        }

        let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);

        // Scale the initial inverse Hessian to the first secant pair.
        if iterations == 1 && sy < 0.0 {
            let yy = dot(&y, &y);
            if yy > 0.0 {
                inv_hessian = identity(n);
                inv_hessian.scale(-sy / yy);
            }
        }

        // BFGS update on the inverse Hessian of the negated objective, which
        // in ascent form uses rho = -1/(s.y) with s.y < 0 along ascent steps.
        let s_norm = dot(&s, &s).sqrt();
        let y_norm = dot(&y, &y).sqrt();
        if -sy > CURVATURE_GUARD * s_norm * y_norm {
            let rho = -1.0 / sy;
            let hy = mat_vec(&inv_hessian, &y);
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    let update = rho * (s[i] * hy[j] + hy[i] * s[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                    inv_hessian.add_assign(i, j, update);
                }
            }
        }

        x = new_x;
        value = new_value;
        grad = new_grad;
    }

    let converged = max_norm(&grad) < config.gradient_tolerance;
    Ok(OptimOutcome { x, value, gradient: grad, iterations, converged })
}

fn identity(n: usize) -> SquareMatrix {
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        m.set(i, i, 1.0);
    }
    m
}

fn mat_vec(m: &SquareMatrix, v: &[f64]) -> Vec<f64> {
    (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j) * v[j]).sum()).collect()
}
