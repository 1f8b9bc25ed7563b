//! Primal active-set solver for strictly convex quadratic programs:
//!
//! ```text
//! min  1/2 z' H z + q' z
//! s.t. A z = b          (equalities)
//!      G z <= h         (inequalities)
//! ```
//!
//! Starting from a feasible point, each iteration solves the equality-
//! constrained subproblem over the current working set, steps to the nearest
//! blocking constraint, and drops working constraints whose multipliers come
//! out negative. Strict convexity of H makes the objective strictly decrease
//! on every nonzero step, so the loop terminates. Systems here are tiny
//! (design dimension plus two elastic slacks), so each subproblem is a dense
//! refactorization.

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::linalg::solve_lu;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("starting point violates constraint {index} by {violation:e}")]
    InfeasibleStart { index: usize, violation: f64 },
    #[error("KKT system singular with working set {working_set:?}")]
    SingularKkt { working_set: Vec<usize> },
    #[error("active-set iteration limit {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: Array2<f64>,
    pub linear: Vec<f64>,
    /// Equality rows (coefficients, rhs).
    pub equalities: Vec<(Vec<f64>, f64)>,
    /// Inequality rows (coefficients, rhs) meaning `coeffs . z <= rhs`.
    pub inequalities: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub equality_multipliers: Vec<f64>,
    /// One per inequality; zero when inactive, nonnegative when active.
    pub inequality_multipliers: Vec<f64>,
    pub iterations: usize,
}

const FEASIBILITY_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-12;
const MULTIPLIER_TOL: f64 = 1e-9;

/// Solves the QP from a point feasible for all constraints.
pub fn solve_qp(problem: &QpProblem, z0: &[f64]) -> Result<QpSolution, QpError> {
    let n = z0.len();
    for (index, (row, rhs)) in problem.equalities.iter().enumerate() {
        let residual: f64 = row.iter().zip(z0).map(|(a, z)| a * z).sum::<f64>() - rhs;
        if residual.abs() > FEASIBILITY_TOL {
            return Err(QpError::InfeasibleStart {
                index,
                violation: residual.abs(),
            });
        }
    }
    for (index, (row, rhs)) in problem.inequalities.iter().enumerate() {
        let violation: f64 = row.iter().zip(z0).map(|(a, z)| a * z).sum::<f64>() - rhs;
        if violation > FEASIBILITY_TOL {
            return Err(QpError::InfeasibleStart { index, violation });
        }
    }

    let mut z = z0.to_vec();
    let mut working: Vec<usize> = Vec::new();
    let limit = 50 * (problem.inequalities.len() + n + 2);

    for iteration in 0..limit {
        // Equality-constrained step: [H C'; C 0] [p; lambda] = [-(Hz+q); 0]
        // with C stacking the equalities and the working inequalities.
        let k_eq = problem.equalities.len();
        let k = k_eq + working.len();
        let m = n + k;
        let mut kkt = Array2::<f64>::zeros((m, m));
        let mut rhs = Array1::<f64>::zeros(m);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = problem.hessian[(i, j)];
            }
            let hz_q: f64 = (0..n).map(|j| problem.hessian[(i, j)] * z[j]).sum::<f64>()
                + problem.linear[i];
            rhs[i] = -hz_q;
        }
        let mut row_index = n;
        for (row, _) in &problem.equalities {
            for j in 0..n {
                kkt[(row_index, j)] = row[j];
                kkt[(j, row_index)] = row[j];
            }
            row_index += 1;
        }
        for &w in &working {
            let (row, _) = &problem.inequalities[w];
            for j in 0..n {
                kkt[(row_index, j)] = row[j];
                kkt[(j, row_index)] = row[j];
            }
            row_index += 1;
        }
        let solution = solve_lu(&kkt, &rhs).ok_or_else(|| QpError::SingularKkt {
            working_set: working.clone(),
        })?;
        let p: Vec<f64> = solution.iter().take(n).cloned().collect();
        let step_norm = p.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

        if step_norm <= STEP_TOL * (1.0 + z.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            // Stationary on the working set; check multiplier signs.
            let mut worst: Option<(usize, f64)> = None;
            for slot in 0..working.len() {
                let mu = solution[n + k_eq + slot];
                if mu < -MULTIPLIER_TOL && worst.is_none_or(|(_, m)| mu < m) {
                    worst = Some((slot, mu));
                }
            }
            match worst {
                Some((slot, _)) => {
                    working.remove(slot);
                }
                None => {
                    let mut inequality_multipliers = vec![0.0; problem.inequalities.len()];
                    for (slot, &w) in working.iter().enumerate() {
                        inequality_multipliers[w] = solution[n + k_eq + slot].max(0.0);
                    }
                    let equality_multipliers =
                        (0..k_eq).map(|i| solution[n + i]).collect();
                    return Ok(QpSolution {
                        z,
                        equality_multipliers,
                        inequality_multipliers,
                        iterations: iteration,
                    });
                }
            }
            continue;
        }

        // Step length to the nearest blocking inequality.
        let mut alpha = 1.0f64;
        let mut blocker: Option<usize> = None;
        for (i, (row, rhs_i)) in problem.inequalities.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let direction: f64 = row.iter().zip(&p).map(|(a, v)| a * v).sum();
            if direction > STEP_TOL {
                let slack: f64 = rhs_i - row.iter().zip(&z).map(|(a, v)| a * v).sum::<f64>();
                let limit = (slack / direction).max(0.0);
                if limit < alpha {
                    alpha = limit;
                    blocker = Some(i);
                }
            }
        }
        for (zi, pi) in z.iter_mut().zip(&p) {
            *zi += alpha * pi;
        }
        if let Some(b) = blocker {
            working.push(b);
        }
    }
    Err(QpError::IterationLimit(limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity(n: usize) -> Array2<f64> {
        Array2::eye(n)
    }

    #[test]
    fn unconstrained_minimum() {
        let problem = QpProblem {
            hessian: identity(2),
            linear: vec![-1.0, -2.0],
            equalities: vec![],
            inequalities: vec![],
        };
        let sol = solve_qp(&problem, &[0.0, 0.0]).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-10);
        assert!((sol.z[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn bound_becomes_active() {
        // min 1/2|z|^2 - 2 z0 s.t. z0 <= 1: optimum at z0 = 1 with mu = 1.
        let problem = QpProblem {
            hessian: identity(2),
            linear: vec![-2.0, 0.0],
            equalities: vec![],
            inequalities: vec![(vec![1.0, 0.0], 1.0)],
        };
        let sol = solve_qp(&problem, &[0.0, 0.0]).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-10);
        assert!((sol.inequality_multipliers[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_is_honoured() {
        // min 1/2|z|^2 s.t. z0 + z1 = 2: optimum (1, 1), multiplier -1.
        let problem = QpProblem {
            hessian: identity(2),
            linear: vec![0.0, 0.0],
            equalities: vec![(vec![1.0, 1.0], 2.0)],
            inequalities: vec![],
        };
        let sol = solve_qp(&problem, &[1.5, 0.5]).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-10);
        assert!((sol.z[1] - 1.0).abs() < 1e-10);
        assert!((sol.equality_multipliers[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn drops_wrongly_guessed_constraints() {
        // min 1/2 (z - (2, 0.5))' H (z - ...) with H = diag(1, 4) under the
        // box z <= (1, 1), z >= (0, 0). Optimum at z = (1, 0.5).
        let h = array![[1.0, 0.0], [0.0, 4.0]];
        let problem = QpProblem {
            hessian: h,
            linear: vec![-2.0, -2.0],
            equalities: vec![],
            inequalities: vec![
                (vec![1.0, 0.0], 1.0),
                (vec![0.0, 1.0], 1.0),
                (vec![-1.0, 0.0], 0.0),
                (vec![0.0, -1.0], 0.0),
            ],
        };
        // Start pinned at the origin corner so both lower bounds enter the
        // working set and one must be dropped.
        let sol = solve_qp(&problem, &[0.0, 0.0]).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-10);
        assert!((sol.z[1] - 0.5).abs() < 1e-10);
        assert!(sol.inequality_multipliers[0] > 0.0);
        assert_eq!(sol.inequality_multipliers[2], 0.0);
    }

    #[test]
    fn infeasible_start_rejected() {
        let problem = QpProblem {
            hessian: identity(1),
            linear: vec![0.0],
            equalities: vec![],
            inequalities: vec![(vec![1.0], 1.0)],
        };
        assert!(matches!(
            solve_qp(&problem, &[2.0]),
            Err(QpError::InfeasibleStart { .. })
        ));
    }
}
