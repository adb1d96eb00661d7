//! Randomized second-stage LASSO
//!
//! ```text
//! minimize  ½‖y − Xβ‖² + Σ_j λ_j|β_j| + ε‖β‖²/2 − Rᵀβ,   R ~ N(0, η² I)
//! ```
//!
//! and the KKT state at its solution: the active set `E`, signs `s_E`, the
//! active values, the inactive subgradient `z` and the orthogonal residual
//! statistic `β̂⊥ = Xᵀy − XᵀG_Ē β̂_Ē`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lasso::{coordinate_descent, support_and_signs, validate_design};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, select_columns, serde_vec};
use crate::rng::{rng_from_seed, standard_normal_vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationSpec {
    pub eta_sq: f64,
    pub seed: u64,
    #[serde(with = "serde_vec")]
    pub realized: DVector<f64>,
}

impl RandomizationSpec {
    /// Draws `R ~ N(0, η² I)` of length `dim` from `seed`.
    pub fn draw(eta_sq: f64, seed: u64, dim: usize) -> Result<Self> {
        if !(eta_sq > 0.0) || !eta_sq.is_finite() {
            return Err(Error::invalid("randomization variance must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let realized = standard_normal_vector(&mut rng, dim) * eta_sq.sqrt();
        Ok(RandomizationSpec {
            eta_sq,
            seed,
            realized,
        })
    }

    /// A fixed, user-supplied realization (used by tests and replays).
    pub fn fixed(eta_sq: f64, realized: DVector<f64>) -> Self {
        RandomizationSpec {
            eta_sq,
            seed: 0,
            realized,
        }
    }
}

/// KKT state of one randomized LASSO solve.
///
/// `active` and `inactive` index positions within `fbar`; `fbar` and
/// `augmented` index columns of the full explanatory matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub fbar: Vec<usize>,
    pub active: Vec<usize>,
    pub signs: Vec<f64>,
    #[serde(with = "serde_vec")]
    pub beta_lasso: DVector<f64>,
    pub inactive: Vec<usize>,
    #[serde(with = "serde_vec")]
    pub subgradient: DVector<f64>,
    #[serde(with = "serde_vec")]
    pub lambda: DVector<f64>,
    pub epsilon: f64,
    pub randomization: RandomizationSpec,
    pub augmented: Vec<usize>,
    /// Least-squares estimate on the augmented columns.
    #[serde(with = "serde_vec")]
    pub beta_hat: DVector<f64>,
    #[serde(with = "serde_vec")]
    pub beta_perp: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SelectionRecord {
    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Full-length solution over `fbar` (zeros off the active set).
    pub fn solution(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.fbar.len());
        for (k, &j) in self.active.iter().enumerate() {
            b[j] = self.beta_lasso[k];
        }
        b
    }

    /// Selected columns expressed as indices into the full matrix.
    pub fn active_global(&self) -> Vec<usize> {
        self.active.iter().map(|&j| self.fbar[j]).collect()
    }

    /// Re-expresses the record against the full explanatory matrix `g`:
    /// `fbar` maps the solve's columns to columns of `g`, and `augmented`
    /// (a superset of the selected columns, global indices) replaces `Ē`.
    /// Recomputes `β̂_Ē` and `β̂⊥`.
    pub fn lift(
        mut self,
        g: &DMatrix<f64>,
        y: &DVector<f64>,
        fbar: &[usize],
        augmented: Vec<usize>,
    ) -> Result<Self> {
        if fbar.len() != self.fbar.len() {
            return Err(Error::dim("screened set", self.fbar.len(), fbar.len()));
        }
        if let Some(&bad) = fbar.iter().chain(augmented.iter()).find(|&&j| j >= g.ncols()) {
            return Err(Error::invalid(format!("column index {bad} outside the design")));
        }
        self.fbar = fbar.to_vec();
        for j in self.active_global() {
            if !augmented.contains(&j) {
                return Err(Error::invalid("augmented set must contain the active set"));
            }
        }
        let g_fbar = select_columns(g, fbar);
        let (beta_hat, beta_perp) = orthogonal_statistics(&g_fbar, g, y, &augmented)?;
        self.augmented = augmented;
        self.beta_hat = beta_hat;
        self.beta_perp = beta_perp;
        Ok(self)
    }
}

/// `β̂_Ē` and `β̂⊥ = G_F̄ᵀy − G_F̄ᵀG_Ē β̂_Ē`.
pub(crate) fn orthogonal_statistics(
    g_fbar: &DMatrix<f64>,
    g: &DMatrix<f64>,
    y: &DVector<f64>,
    augmented: &[usize],
) -> Result<(DVector<f64>, DVector<f64>)> {
    if augmented.is_empty() {
        return Ok((DVector::zeros(0), g_fbar.transpose() * y));
    }
    let g_ebar = select_columns(g, augmented);
    let beta_hat = least_squares(&g_ebar, y)?;
    let beta_perp = g_fbar.transpose() * (y - &g_ebar * &beta_hat);
    Ok((beta_hat, beta_perp))
}

pub fn solve_randomized_lasso(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    lambda: &DVector<f64>,
    epsilon: f64,
    randomization: &RandomizationSpec,
) -> Result<SelectionRecord> {
    validate_design(x, y)?;
    let q = x.ncols();
    if lambda.len() != q {
        return Err(Error::dim("penalty weights", q, lambda.len()));
    }
    if randomization.realized.len() != q {
        return Err(Error::dim("randomization vector", q, randomization.realized.len()));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid("ridge coefficient epsilon must be positive"));
    }
    if lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::invalid("penalty weights must be finite and non-negative"));
    }

    let gram = x.transpose() * x;
    let linear = x.transpose() * y + &randomization.realized;
    let cd = coordinate_descent(&gram, &linear, lambda, epsilon);
    let (active, signs) = support_and_signs(&cd.beta);
    let inactive: Vec<usize> = (0..q).filter(|j| !active.contains(j)).collect();

    let fitted = &gram * &cd.beta;
    let subgradient = DVector::from_fn(inactive.len(), |k, _| {
        let j = inactive[k];
        let r = linear[j] - fitted[j];
        if lambda[j] > 0.0 {
            r / lambda[j]
        } else {
            0.0
        }
    });
    if cd.converged && subgradient.iter().any(|z| z.abs() >= 1.0) {
        return Err(Error::numerical(
            "inactive subgradient reached the unit bound after a converged solve",
        ));
    }

    let beta_lasso = DVector::from_fn(active.len(), |k, _| cd.beta[active[k]]);
    let (beta_hat, beta_perp) = orthogonal_statistics(x, x, y, &active)?;
    Ok(SelectionRecord {
        fbar: (0..q).collect(),
        augmented: active.clone(),
        active,
        signs,
        beta_lasso,
        inactive,
        subgradient,
        lambda: lambda.clone(),
        epsilon,
        randomization: randomization.clone(),
        beta_hat,
        beta_perp,
        iterations: cd.iterations,
        converged: cd.converged,
    })
}

/// Sup-norm residual of the stationarity system
///
/// ```text
/// R + Xᵀy − (Λ_E s_E, Λ_{E^c} z) − [X_EᵀX_E + εI ; X_{E^c}ᵀX_E] β̂_E
/// ```
///
/// with `x` the screened design the record was solved on.
pub fn verify_kkt(
    record: &SelectionRecord,
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    r: &DVector<f64>,
) -> f64 {
    let gram = x.transpose() * x;
    let linear = x.transpose() * y + r;
    let mut residual = 0.0_f64;
    let active_term = |j: usize| -> f64 {
        record
            .active
            .iter()
            .zip(record.beta_lasso.iter())
            .map(|(&k, &b)| gram[(j, k)] * b)
            .sum()
    };
    for (k, &j) in record.active.iter().enumerate() {
        let lhs = linear[j] - record.lambda[j] * record.signs[k];
        let rhs = active_term(j) + record.epsilon * record.beta_lasso[k];
        residual = residual.max((lhs - rhs).abs());
    }
    for (k, &j) in record.inactive.iter().enumerate() {
        let lhs = linear[j] - record.lambda[j] * record.subgradient[k];
        residual = residual.max((lhs - active_term(j)).abs());
    }
    residual
}
