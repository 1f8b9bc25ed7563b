//! Internal dense linear algebra helpers shared by the fitting and
//! optimization code. Backed by LAPACK through `ndarray-linalg`.

use ndarray::{Array1, Array2};
use ndarray_linalg::{FactorizeHInto, OperationNorm, Solve, SolveH, SVD};

/// A symmetric-indefinite (Bunch-Kaufman) factorization of a saddle system,
/// reusable across right-hand sides.
pub(crate) struct SaddleFactorization {
    factors: ndarray_linalg::BKFactorized<ndarray::OwnedRepr<f64>>,
    norm_one: f64,
    dim: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("linear solve failed: {0}")]
pub(crate) struct SolveFailure(pub String);

impl SaddleFactorization {
    pub fn new(matrix: Array2<f64>) -> Result<Self, SolveFailure> {
        let dim = matrix.nrows();
        let norm_one = matrix.opnorm_one().map_err(|e| SolveFailure(e.to_string()))?;
        let factors = matrix
            .factorizeh_into()
            .map_err(|e| SolveFailure(e.to_string()))?;
        Ok(Self {
            factors,
            norm_one,
            dim,
        })
    }

    pub fn solve(&self, rhs: &Array1<f64>) -> Result<Array1<f64>, SolveFailure> {
        self.factors
            .solveh(rhs)
            .map(|x| x.to_owned())
            .map_err(|e| SolveFailure(e.to_string()))
    }

    /// Hager-style 1-norm condition estimate: a handful of extra solves, no
    /// explicit inverse. The matrix is symmetric so transpose solves reuse
    /// the same factorization.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim;
        let mut x = Array1::from_elem(n, 1.0 / n as f64);
        let mut inv_norm = 0.0f64;
        for _ in 0..5 {
            let y = match self.factors.solveh(&x) {
                Ok(y) => y.to_owned(),
                Err(_) => return f64::INFINITY,
            };
            inv_norm = y.iter().map(|v| v.abs()).sum();
            let xi = y.mapv(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = match self.factors.solveh(&xi) {
                Ok(z) => z.to_owned(),
                Err(_) => return f64::INFINITY,
            };
            let (j, z_max) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.abs()))
                .fold((0, 0.0), |acc, it| if it.1 > acc.1 { it } else { acc });
            let zx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if z_max <= zx.abs() {
                break;
            }
            x.fill(0.0);
            x[j] = 1.0;
        }
        self.norm_one * inv_norm
    }
}

/// Dense LU solve for small systems. Returns None when LAPACK reports the
/// matrix singular.
pub(crate) fn solve_lu(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    a.solve(b).ok()
}

/// Numerical rank via singular values, with the usual max(m, n) * eps * s_max
/// threshold.
pub(crate) fn svd_rank(a: &Array2<f64>) -> usize {
    let (_, s, _) = match a.svd(false, false) {
        Ok(r) => r,
        Err(_) => return 0,
    };
    let smax = s.iter().cloned().fold(0.0f64, f64::max);
    let tol = smax * a.nrows().max(a.ncols()) as f64 * f64::EPSILON;
    s.iter().filter(|&&v| v > tol).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn saddle_solve_round_trips() {
        let a = array![[2.0, 1.0, 1.0], [1.0, 0.0, -1.0], [1.0, -1.0, 3.0]];
        let b = array![1.0, 2.0, 3.0];
        let f = SaddleFactorization::new(a.clone()).unwrap();
        let x = f.solve(&b).unwrap();
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        let cond = f.condition_estimate();
        assert!(cond.is_finite() && cond >= 1.0);
    }

    #[test]
    fn rank_detects_deficiency() {
        let a = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        assert_eq!(svd_rank(&a), 1);
        let b = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert_eq!(svd_rank(&b), 2);
    }
}
