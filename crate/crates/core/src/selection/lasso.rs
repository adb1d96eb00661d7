//! Cyclic coordinate descent for the weighted LASSO
//!
//! ```text
//! minimize  ½‖y − Xα‖² + ε‖α‖²/2 − Rᵀα + Σ_j λ_j |α_j|
//! ```
//!
//! The plain first-stage LASSO is the special case `ε = 0`, `R = 0`. All
//! updates work on the Gram matrix `XᵀX`, which is cheap at the column counts
//! this crate handles after screening.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, serde_vec};

/// Convergence threshold on the largest coordinate change in one sweep.
pub const SWEEP_TOLERANCE: f64 = 1e-10;
/// Sweep cap before a solve is reported as non-converged.
pub const MAX_SWEEPS: usize = 10_000;

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoSolution {
    #[serde(with = "serde_vec")]
    pub coefficients: DVector<f64>,
    pub active_set: Vec<usize>,
    pub signs: Vec<f64>,
    #[serde(with = "serde_vec")]
    pub lambda: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LassoSolution {
    /// Largest violation of the LASSO optimality conditions at this solution.
    pub fn kkt_residual(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
        let corr = x.transpose() * (y - x * &self.coefficients);
        (0..corr.len())
            .map(|j| {
                let b = self.coefficients[j];
                if b != 0.0 {
                    (corr[j] - self.lambda[j] * b.signum()).abs()
                } else {
                    (corr[j].abs() - self.lambda[j]).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) struct CdOutcome {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `½βᵀ(gram + ridge·I)β − linearᵀβ + Σ penalty_j|β_j|`.
pub(crate) fn coordinate_descent(
    gram: &DMatrix<f64>,
    linear: &DVector<f64>,
    penalty: &DVector<f64>,
    ridge: f64,
) -> CdOutcome {
    let q = linear.len();
    let mut beta = DVector::zeros(q);
    // fitted = gram * beta, kept in sync with every coordinate move
    let mut fitted = DVector::<f64>::zeros(q);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_SWEEPS {
        iterations += 1;
        let mut max_change = 0.0_f64;
        for j in 0..q {
            let diag = gram[(j, j)];
            let c = linear[j] - (fitted[j] - diag * beta[j]);
            let updated = soft_threshold(c, penalty[j]) / (diag + ridge);
            let delta = updated - beta[j];
            if delta != 0.0 {
                beta[j] = updated;
                fitted.axpy(delta, &gram.column(j), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < SWEEP_TOLERANCE {
            converged = true;
            break;
        }
    }
    let beta = polish(gram, linear, penalty, ridge, &beta).unwrap_or(beta);
    CdOutcome {
        beta,
        iterations,
        converged,
    }
}

/// Re-solves the stationarity system exactly on the support found by
/// coordinate descent. Returns `None` when the exact solve disagrees with the
/// support or signs, in which case the coordinate-descent iterate is kept.
fn polish(
    gram: &DMatrix<f64>,
    linear: &DVector<f64>,
    penalty: &DVector<f64>,
    ridge: f64,
    beta: &DVector<f64>,
) -> Option<DVector<f64>> {
    let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let k = active.len();
    let mut a = DMatrix::from_fn(k, k, |r, c| gram[(active[r], active[c])]);
    for d in 0..k {
        a[(d, d)] += ridge;
    }
    let rhs = DVector::from_fn(k, |r, _| {
        let j = active[r];
        linear[j] - penalty[j] * beta[j].signum()
    });
    let sol = a.clone().cholesky().map(|c| c.solve(&rhs)).or_else(|| a.lu().solve(&rhs))?;
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut out = DVector::zeros(beta.len());
    for (r, &j) in active.iter().enumerate() {
        if sol[r].signum() != beta[j].signum() || sol[r] == 0.0 {
            return None;
        }
        out[j] = sol[r];
    }
    let fitted = gram * &out;
    for j in 0..beta.len() {
        if out[j] == 0.0 && (linear[j] - fitted[j]).abs() > penalty[j] {
            return None;
        }
    }
    Some(out)
}

pub(crate) fn support_and_signs(beta: &DVector<f64>) -> (Vec<usize>, Vec<f64>) {
    let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    let signs = active.iter().map(|&j| beta[j].signum()).collect();
    (active, signs)
}

/// Plain weighted LASSO `½‖y − Xα‖² + Σ λ_j|α_j|`.
pub fn solve_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: &DVector<f64>) -> Result<LassoSolution> {
    validate_design(x, y)?;
    if lambda.len() != x.ncols() {
        return Err(Error::dim("penalty vector", x.ncols(), lambda.len()));
    }
    if lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::invalid("penalties must be finite and non-negative"));
    }
    let gram = x.transpose() * x;
    let linear = x.transpose() * y;
    let cd = coordinate_descent(&gram, &linear, lambda, 0.0);
    let (active_set, signs) = support_and_signs(&cd.beta);
    Ok(LassoSolution {
        coefficients: cd.beta,
        active_set,
        signs,
        lambda: lambda.clone(),
        iterations: cd.iterations,
        converged: cd.converged,
    })
}

pub(crate) fn validate_design(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::dim("rows of the design", y.len(), x.nrows()));
    }
    if !all_finite(x) || !y.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("design or response contains non-finite entries"));
    }
    for j in 0..x.ncols() {
        if x.column(j).iter().all(|&v| v == 0.0) {
            return Err(Error::invalid(format!("column {j} of the design is identically zero")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, standard_normal_vector};
    use approx::assert_relative_eq;

    fn random_problem(seed: u64, n: usize, q: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = rng_from_seed(seed);
        let x = DMatrix::from_column_slice(n, q, standard_normal_vector(&mut rng, n * q).as_slice());
        let y = standard_normal_vector(&mut rng, n);
        (x, y)
    }

    /// Proximal gradient (ISTA) run far past the production tolerance.
    fn proximal_gradient_oracle(x: &DMatrix<f64>, y: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        let gram = x.transpose() * x;
        let lipschitz = nalgebra::SymmetricEigen::new(gram.clone())
            .eigenvalues
            .max();
        let step = 1.0 / lipschitz;
        let xty = x.transpose() * y;
        let mut b = DVector::zeros(x.ncols());
        for _ in 0..2_000_000 {
            let grad = &gram * &b - &xty;
            let next = DVector::from_fn(b.len(), |j, _| {
                soft_threshold(b[j] - step * grad[j], step * lambda[j])
            });
            let change = (&next - &b).amax();
            b = next;
            if change < 1e-12 {
                break;
            }
        }
        b
    }

    #[test]
    fn large_penalty_gives_empty_solution() {
        let (x, y) = random_problem(1, 12, 5);
        let bound = (x.transpose() * &y).amax();
        let sol = solve_lasso(&x, &y, &DVector::from_element(5, bound)).unwrap();
        assert!(sol.active_set.is_empty());
        assert!(sol.coefficients.iter().all(|&v| v == 0.0));
        assert!(sol.converged);
    }

    #[test]
    fn orthonormal_design_without_penalty_is_least_squares() {
        let (raw, y) = random_problem(2, 10, 4);
        let q = raw.qr().q();
        let sol = solve_lasso(&q, &y, &DVector::zeros(4)).unwrap();
        assert_relative_eq!(sol.coefficients, q.transpose() * &y, epsilon = 1e-12);
    }

    #[test]
    fn matches_proximal_gradient_oracle() {
        let (x, y) = random_problem(3, 10, 4);
        let lambda = DVector::from_vec(vec![0.8, 1.2, 0.5, 2.0]);
        let sol = solve_lasso(&x, &y, &lambda).unwrap();
        let oracle = proximal_gradient_oracle(&x, &y, &lambda);
        assert!(sol.converged);
        assert!((&sol.coefficients - &oracle).amax() < 1e-6);
        assert!(sol.kkt_residual(&x, &y) < 1e-8);
    }

    #[test]
    fn signs_track_coefficients() {
        let (x, y) = random_problem(4, 30, 8);
        let sol = solve_lasso(&x, &y, &DVector::from_element(8, 1.0)).unwrap();
        for (k, &j) in sol.active_set.iter().enumerate() {
            assert_eq!(sol.signs[k], sol.coefficients[j].signum());
        }
        for j in 0..8 {
            if !sol.active_set.contains(&j) {
                assert_eq!(sol.coefficients[j], 0.0);
            }
        }
    }

    #[test]
    fn rejects_zero_column_and_bad_dims() {
        let (mut x, y) = random_problem(5, 6, 3);
        x.column_mut(1).fill(0.0);
        assert!(solve_lasso(&x, &y, &DVector::from_element(3, 0.1)).is_err());
        let (x, y) = random_problem(6, 6, 3);
        assert!(matches!(
            solve_lasso(&x, &y, &DVector::from_element(2, 0.1)),
            Err(Error::Dimension { .. })
        ));
        assert!(solve_lasso(&x, &y, &DVector::from_element(3, -0.1)).is_err());
    }
}
