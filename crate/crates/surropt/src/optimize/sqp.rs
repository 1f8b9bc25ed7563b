//! SQP solver: quadratic model of the Lagrangian with a damped BFGS
//! curvature update, linearized constraints, an elastic (slack-penalized)
//! QP subproblem, and a backtracking line search on the L1 merit function
//! `f + rho |c|`.
//!
//! Box bounds and linear inequalities are hard: the subproblem step honours
//! them, so every iterate stays feasible for them and the merit function
//! only needs the equality violation. The elastic slacks keep the subproblem
//! solvable when the linearized equality is inconsistent with the bounds;
//! the penalty parameter rises until the slacks close.

use ndarray::Array2;
use thiserror::Error;

use super::nlp::NonlinearProgram;
use super::qp::{solve_qp, QpProblem};

#[derive(Debug, Error)]
pub enum SqpError {
    #[error("starting point infeasible: {0}")]
    InfeasibleStart(String),
    #[error("dimension mismatch: x0 has {got}, problem has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("objective is not finite at the starting point")]
    BadStart,
}

#[derive(Debug, Clone, Copy)]
pub struct SqpSettings {
    pub max_iterations: usize,
    pub max_line_search: usize,
    /// Stationarity threshold, scaled by 1 + |f|.
    pub stationarity_tol: f64,
    pub initial_penalty: f64,
}

impl Default for SqpSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            max_line_search: 40,
            stationarity_tol: 1e-6,
            initial_penalty: 1.0,
        }
    }
}

/// One accepted step of the iteration log.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub constraint_violation: f64,
    pub penalty: f64,
    pub merit_before: f64,
    pub merit_after: f64,
    pub step_length: f64,
    pub stationarity: f64,
}

#[derive(Debug, Clone)]
pub struct SqpOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub equality_multiplier: f64,
    pub constraint_residual: f64,
    pub stationarity: f64,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
    pub trace: Vec<IterationRecord>,
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
}

const ELASTIC_REGULARIZATION: f64 = 1e-8;
const ACTIVE_TOL: f64 = 1e-9;

struct Evaluated {
    f: f64,
    g: Vec<f64>,
    c: f64,
    a: Vec<f64>,
}

fn evaluate(problem: &NonlinearProgram<'_>, x: &[f64]) -> Evaluated {
    let f = problem.objective.value(x);
    let g = problem.objective.gradient(x);
    let (c, a) = match &problem.equality {
        Some(eq) => (eq.residual(x), eq.function.gradient(x)),
        None => (0.0, vec![0.0; x.len()]),
    };
    Evaluated { f, g, c, a }
}

fn projected_stationarity(
    problem: &NonlinearProgram<'_>,
    x: &[f64],
    ev: &Evaluated,
    lambda: f64,
    mu: &[f64],
) -> f64 {
    let n = x.len();
    let mut gl: Vec<f64> = ev
        .g
        .iter()
        .zip(&ev.a)
        .map(|(gi, ai)| gi + lambda * ai)
        .collect();
    for (j, ineq) in problem.linear_inequalities.iter().enumerate() {
        if mu[j] != 0.0 {
            for (gli, ci) in gl.iter_mut().zip(&ineq.coefficients) {
                *gli += mu[j] * ci;
            }
        }
    }
    let mut sup = 0.0f64;
    for i in 0..n {
        let span = problem.upper[i] - problem.lower[i];
        let tol = ACTIVE_TOL * (1.0 + span.abs());
        let r = if x[i] - problem.lower[i] <= tol {
            gl[i].min(0.0)
        } else if problem.upper[i] - x[i] <= tol {
            gl[i].max(0.0)
        } else {
            gl[i]
        };
        sup = sup.max(r.abs());
    }
    sup
}

/// Minimizes the problem from `x0`, which must satisfy the bounds and the
/// linear inequalities (the equality may be violated). Never reports a
/// silent success: a budget or subproblem failure comes back with
/// `converged = false` and a diagnostic message.
pub fn minimize(
    problem: &NonlinearProgram<'_>,
    x0: &[f64],
    settings: &SqpSettings,
) -> Result<SqpOutcome, SqpError> {
    let n = problem.lower.len();
    if x0.len() != n {
        return Err(SqpError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        if x[i] < problem.lower[i] - 1e-12 || x[i] > problem.upper[i] + 1e-12 {
            return Err(SqpError::InfeasibleStart(format!(
                "component {i} = {} outside [{}, {}]",
                x[i], problem.lower[i], problem.upper[i]
            )));
        }
        x[i] = x[i].clamp(problem.lower[i], problem.upper[i]);
    }
    for (j, ineq) in problem.linear_inequalities.iter().enumerate() {
        let v = ineq.violation(&x);
        if v > 1e-9 {
            return Err(SqpError::InfeasibleStart(format!(
                "linear inequality {j} violated by {v:e}"
            )));
        }
    }

    let has_equality = problem.equality.is_some();
    let mut ev = evaluate(problem, &x);
    if !ev.f.is_finite() {
        return Err(SqpError::BadStart);
    }

    // Least-squares multiplier estimate for the first stationarity check.
    let mut lambda = if has_equality {
        let aa: f64 = ev.a.iter().map(|v| v * v).sum();
        if aa > 0.0 {
            -ev.a.iter().zip(&ev.g).map(|(ai, gi)| ai * gi).sum::<f64>() / aa
        } else {
            0.0
        }
    } else {
        0.0
    };
    let mut mu = vec![0.0; problem.linear_inequalities.len()];
    let mut b = Array2::<f64>::eye(n);
    let mut penalty = settings.initial_penalty.max(1e-3);
    let mut trace = Vec::new();
    let mut message = format!("iteration cap {} reached", settings.max_iterations);
    let mut converged = false;
    let mut iterations = 0;
    let mut bfgs_reset_done = false;

    for iteration in 0..settings.max_iterations {
        iterations = iteration + 1;
        let stationarity = projected_stationarity(problem, &x, &ev, lambda, &mu);
        let eq_ok = problem
            .equality
            .as_ref()
            .map(|eq| ev.c.abs() <= eq.tolerance)
            .unwrap_or(true);
        if stationarity <= settings.stationarity_tol * (1.0 + ev.f.abs()) && eq_ok {
            converged = true;
            message = "converged".into();
            iterations = iteration;
            break;
        }

        // Elastic QP: variables (p, s+, s-) when an equality is present.
        let m = if has_equality { n + 2 } else { n };
        let mut solution = None;
        for escalation in 0..5 {
            let mut hessian = Array2::<f64>::zeros((m, m));
            for i in 0..n {
                for j in 0..n {
                    hessian[(i, j)] = b[(i, j)];
                }
            }
            let mut linear = vec![0.0; m];
            linear[..n].copy_from_slice(&ev.g);
            if has_equality {
                hessian[(n, n)] = ELASTIC_REGULARIZATION;
                hessian[(n + 1, n + 1)] = ELASTIC_REGULARIZATION;
                linear[n] = penalty;
                linear[n + 1] = penalty;
            }
            let mut equalities = Vec::new();
            if has_equality {
                let mut row = vec![0.0; m];
                row[..n].copy_from_slice(&ev.a);
                row[n] = -1.0;
                row[n + 1] = 1.0;
                equalities.push((row, -ev.c));
            }
            let mut inequalities = Vec::new();
            for i in 0..n {
                let mut up = vec![0.0; m];
                up[i] = 1.0;
                inequalities.push((up, problem.upper[i] - x[i]));
                let mut lo = vec![0.0; m];
                lo[i] = -1.0;
                inequalities.push((lo, x[i] - problem.lower[i]));
            }
            for ineq in &problem.linear_inequalities {
                let mut row = vec![0.0; m];
                row[..n].copy_from_slice(&ineq.coefficients);
                inequalities.push((row, -ineq.violation(&x)));
            }
            if has_equality {
                let mut sp = vec![0.0; m];
                sp[n] = -1.0;
                inequalities.push((sp, 0.0));
                let mut sm = vec![0.0; m];
                sm[n + 1] = -1.0;
                inequalities.push((sm, 0.0));
            }
            let mut z0 = vec![0.0; m];
            if has_equality {
                z0[n] = ev.c.max(0.0);
                z0[n + 1] = (-ev.c).max(0.0);
            }
            let qp = QpProblem {
                hessian,
                linear,
                equalities,
                inequalities,
            };
            match solve_qp(&qp, &z0) {
                Ok(sol) => {
                    let slack_sum = if has_equality {
                        sol.z[n] + sol.z[n + 1]
                    } else {
                        0.0
                    };
                    if has_equality
                        && slack_sum > 1e-8 * (1.0 + ev.c.abs())
                        && penalty < 1e8
                        && escalation < 4
                    {
                        penalty *= 10.0;
                        continue;
                    }
                    solution = Some(sol);
                    break;
                }
                Err(e) => {
                    message = format!("QP subproblem failed: {e}");
                    break;
                }
            }
        }
        let Some(qp_solution) = solution else {
            break;
        };
        let p: Vec<f64> = qp_solution.z[..n].to_vec();
        let lambda_new = qp_solution
            .equality_multipliers
            .first()
            .copied()
            .unwrap_or(0.0);
        // Multipliers of the user's linear inequalities follow the 2n box rows.
        let mu_new: Vec<f64> = problem
            .linear_inequalities
            .iter()
            .enumerate()
            .map(|(j, _)| qp_solution.inequality_multipliers[2 * n + j])
            .collect();

        penalty = penalty.max(1.5 * lambda_new.abs() + 1e-3);

        let step_norm = p.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if step_norm <= 1e-14 {
            // No direction left; either we are at a KKT point (caught at the
            // top of the next loop) or the subproblem has stalled.
            let stat = projected_stationarity(problem, &x, &ev, lambda_new, &mu_new);
            let eq_ok = problem
                .equality
                .as_ref()
                .map(|eq| ev.c.abs() <= eq.tolerance)
                .unwrap_or(true);
            if stat <= settings.stationarity_tol * (1.0 + ev.f.abs()) && eq_ok {
                converged = true;
                message = "converged".into();
                lambda = lambda_new;
                mu = mu_new;
                break;
            }
            message = "subproblem step vanished before reaching tolerance".into();
            break;
        }

        let gp: f64 = ev.g.iter().zip(&p).map(|(gi, pi)| gi * pi).sum();
        let c_after: f64 = if has_equality {
            ev.c + ev.a.iter().zip(&p).map(|(ai, pi)| ai * pi).sum::<f64>()
        } else {
            0.0
        };
        let descent = gp - penalty * (ev.c.abs() - c_after.abs());
        let merit_before = ev.f + penalty * ev.c.abs();

        let mut alpha = 1.0f64;
        let mut accepted = None;
        for _ in 0..settings.max_line_search {
            let mut x_trial: Vec<f64> = x
                .iter()
                .zip(&p)
                .map(|(xi, pi)| xi + alpha * pi)
                .collect();
            for (i, v) in x_trial.iter_mut().enumerate() {
                *v = v.clamp(problem.lower[i], problem.upper[i]);
            }
            let f_trial = problem.objective.value(&x_trial);
            let c_trial = problem
                .equality
                .as_ref()
                .map(|eq| eq.residual(&x_trial))
                .unwrap_or(0.0);
            let merit_trial = f_trial + penalty * c_trial.abs();
            let armijo = merit_before + 0.1 * alpha * descent.min(0.0)
                + 1e-14 * (1.0 + merit_before.abs());
            if merit_trial.is_finite() && merit_trial <= armijo {
                accepted = Some((x_trial, merit_trial));
                break;
            }
            alpha *= 0.5;
        }

        let Some((x_new, merit_after)) = accepted else {
            if !bfgs_reset_done {
                // One restart with fresh curvature before giving up.
                b = Array2::eye(n);
                bfgs_reset_done = true;
                lambda = lambda_new;
                mu = mu_new;
                continue;
            }
            message = format!("line search failed at iteration {iteration}");
            break;
        };

        let ev_new = evaluate(problem, &x_new);
        trace.push(IterationRecord {
            iteration,
            objective: ev.f,
            constraint_violation: ev.c.abs(),
            penalty,
            merit_before,
            merit_after,
            step_length: alpha,
            stationarity,
        });

        // Damped BFGS on the Lagrangian gradient difference.
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                (ev_new.g[i] + lambda_new * ev_new.a[i]) - (ev.g[i] + lambda_new * ev.a[i])
            })
            .collect();
        let bs: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| b[(i, j)] * s[j]).sum())
            .collect();
        let sbs: f64 = s.iter().zip(&bs).map(|(a, b)| a * b).sum();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sbs > 1e-16 {
            let theta = if sy < 0.2 * sbs {
                0.8 * sbs / (sbs - sy)
            } else {
                1.0
            };
            let yd: Vec<f64> = (0..n).map(|i| theta * y[i] + (1.0 - theta) * bs[i]).collect();
            let syd: f64 = s.iter().zip(&yd).map(|(a, b)| a * b).sum();
            if syd > 1e-16 {
                for i in 0..n {
                    for j in 0..n {
                        b[(i, j)] += -bs[i] * bs[j] / sbs + yd[i] * yd[j] / syd;
                    }
                }
            }
        }

        x = x_new;
        ev = ev_new;
        lambda = lambda_new;
        mu = mu_new;
    }

    let stationarity = projected_stationarity(problem, &x, &ev, lambda, &mu);
    let mut active_lower = Vec::new();
    let mut active_upper = Vec::new();
    for (i, xi) in x.iter().enumerate() {
        let span = problem.upper[i] - problem.lower[i];
        let tol = ACTIVE_TOL * (1.0 + span.abs());
        if xi - problem.lower[i] <= tol {
            active_lower.push(i);
        } else if problem.upper[i] - xi <= tol {
            active_upper.push(i);
        }
    }
    Ok(SqpOutcome {
        objective: ev.f,
        constraint_residual: ev.c.abs(),
        equality_multiplier: lambda,
        stationarity,
        iterations,
        converged,
        message,
        trace,
        active_lower,
        active_upper,
        x,
    })
}
