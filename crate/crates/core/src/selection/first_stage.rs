//! First-stage screen: one LASSO per intermediary phenotype, the union of
//! their supports, and the penalty weights the second stage derives from it.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lasso::solve_lasso;
use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{least_squares, max_abs};
use crate::rng::{derive_seed, rng_from_seed, standard_normal_vector};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstStageResult {
    pub per_query_sets: Vec<Vec<usize>>,
    /// Sorted union of the per-query supports.
    pub union_set: Vec<usize>,
    /// Number of queries selecting each member of `union_set`.
    pub multiplicity: Vec<usize>,
    pub converged: Vec<bool>,
}

impl FirstStageResult {
    pub fn n_queries(&self) -> usize {
        self.per_query_sets.len()
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// Solves `½‖I_l − Gα‖² + λ_l‖α‖₁` for every column `l` of the intermediary
/// matrix. Queries run in parallel; results are collected in query order.
pub fn run_first_stage(data: &Dataset, lambdas: &[f64]) -> Result<FirstStageResult> {
    let i = data
        .i
        .as_ref()
        .ok_or_else(|| Error::invalid("first stage requested but no intermediary matrix I was supplied"))?;
    if lambdas.len() != i.ncols() {
        return Err(Error::dim("first-stage penalties", i.ncols(), lambdas.len()));
    }
    if let Some(bad) = lambdas.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::invalid(format!("first-stage penalty {bad} must be positive")));
    }
    let p = data.p();
    let solutions: Vec<_> = (0..i.ncols())
        .into_par_iter()
        .map(|l| {
            let target = i.column(l).into_owned();
            solve_lasso(&data.g, &target, &DVector::from_element(p, lambdas[l]))
        })
        .collect::<Result<_>>()?;

    let mut counts = vec![0usize; p];
    let mut per_query_sets = Vec::with_capacity(solutions.len());
    let mut converged = Vec::with_capacity(solutions.len());
    for sol in solutions {
        for &j in &sol.active_set {
            counts[j] += 1;
        }
        per_query_sets.push(sol.active_set);
        converged.push(sol.converged);
    }
    let union_set: Vec<usize> = (0..p).filter(|&j| counts[j] > 0).collect();
    let multiplicity = union_set.iter().map(|&j| counts[j]).collect();
    Ok(FirstStageResult {
        per_query_sets,
        union_set,
        multiplicity,
        converged,
    })
}

/// `λ_j = c·L/m_j`.
pub fn compute_penalty_weights(multiplicity: &[usize], n_queries: usize, c: f64) -> Result<DVector<f64>> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid("penalty scale c must be positive"));
    }
    if multiplicity.iter().any(|&m| m == 0 || m > n_queries) {
        return Err(Error::invalid(format!(
            "every multiplicity must lie in 1..={n_queries}"
        )));
    }
    Ok(DVector::from_fn(multiplicity.len(), |j, _| {
        c * n_queries as f64 / multiplicity[j] as f64
    }))
}

/// `κ · median_k ‖Xᵀξ_k‖_∞` over `draws` draws of `ξ_k ~ N(0, σ² I_n)`.
pub fn noise_scaled_lambda<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    sigma_sq: f64,
    kappa: f64,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::invalid("at least one Monte Carlo draw is required"));
    }
    if !(sigma_sq > 0.0) || !(kappa > 0.0) {
        return Err(Error::invalid("noise variance and kappa must be positive"));
    }
    let sd = sigma_sq.sqrt();
    let mut stats: Vec<f64> = (0..draws)
        .map(|_| {
            let xi = standard_normal_vector(rng, x.nrows()) * sd;
            max_abs(&(x.transpose() * xi))
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let m = stats.len();
    let median = if m % 2 == 1 {
        stats[m / 2]
    } else {
        0.5 * (stats[m / 2 - 1] + stats[m / 2])
    };
    Ok(kappa * median)
}

/// Default first-stage penalties: one noise-scaled λ per intermediary column,
/// with σ̂_l² the sample variance of `I_l`.
pub fn default_first_stage_lambdas(data: &Dataset, kappa: f64, seed: u64) -> Result<Vec<f64>> {
    let i = data
        .i
        .as_ref()
        .ok_or_else(|| Error::invalid("first stage requested but no intermediary matrix I was supplied"))?;
    (0..i.ncols())
        .map(|l| {
            let col = i.column(l).into_owned();
            let var = sample_variance(&col);
            if !(var > 0.0) {
                return Err(Error::invalid(format!(
                    "intermediary column {} is constant",
                    data.i_labels.get(l).map(String::as_str).unwrap_or("?")
                )));
            }
            let mut rng = rng_from_seed(derive_seed(seed, l as u64));
            noise_scaled_lambda(&data.g, var, kappa, 50, &mut rng)
        })
        .collect()
}

/// `10⁻³` times the mean diagonal of `XᵀX`.
pub fn default_epsilon(x: &DMatrix<f64>) -> f64 {
    let q = x.ncols().max(1);
    let trace: f64 = x.column_iter().map(|c| c.norm_squared()).sum();
    1e-3 * trace / q as f64
}

pub(crate) fn sample_variance(v: &DVector<f64>) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let mean = v.mean();
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Outcome noise level before any selection: the residual variance of the
/// full least-squares fit when it has spare degrees of freedom, otherwise the
/// marginal variance of `y`.
pub fn outcome_noise_estimate(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<f64> {
    let (n, r) = (x.nrows(), x.ncols());
    if n != y.len() {
        return Err(Error::dim("rows of the design", y.len(), n));
    }
    if n > r + 1 {
        if let Ok(beta) = least_squares(x, y) {
            let rss = (y - x * beta).norm_squared();
            if rss > 0.0 {
                return Ok(rss / (n - r) as f64);
            }
        }
    }
    let var = sample_variance(y);
    if !(var > 0.0) {
        return Err(Error::invalid("outcome is constant; supply the noise variance explicitly"));
    }
    Ok(var)
}

/// `Ē = E ∪ user_set`, ascending.
pub fn augment_selection(e: &[usize], user_set: &[usize], p: usize) -> Result<Vec<usize>> {
    if let Some(&bad) = e.iter().chain(user_set).find(|&&j| j >= p) {
        return Err(Error::invalid(format!("index {bad} outside 0..{p}")));
    }
    let set: BTreeSet<usize> = e.iter().chain(user_set).copied().collect();
    Ok(set.into_iter().collect())
}
