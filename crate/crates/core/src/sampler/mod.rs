//! Posterior sampling and interval estimation, including the two baselines:
//! the naive (unadjusted) Gaussian posterior and sample splitting.

mod diagnostics;
mod intervals;
mod mala;

pub use diagnostics::{effective_sample_size, split_rhat};
pub use intervals::{credible_intervals, quantile, validate_levels, CredibleIntervals, MIN_DRAWS};
pub use mala::{sample_mala, ChainDiagnostics, PosteriorSamples, SamplerConfig};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{estimate_sigma, PosteriorGeometry};
use crate::linalg::{least_squares, select_columns, select_rows, spd_inverse, symmetrize};
use crate::posterior::{PriorSpec, SelectivePosterior};
use crate::rng::rng_from_seed;
use crate::selection::{noise_scaled_lambda, outcome_noise_estimate, solve_lasso};

/// One evaluation of a sampling target.
#[derive(Debug, Clone)]
pub struct DensityEval {
    pub point: DVector<f64>,
    pub log_density: f64,
    pub grad: DVector<f64>,
    /// Image of `point` in the parameter of interest (`Ψ(ζ)` for the
    /// selective posterior, the point itself otherwise).
    pub image: DVector<f64>,
    /// Optional warm start for the next nearby evaluation.
    pub state: Option<DVector<f64>>,
}

impl DensityEval {
    pub fn plain(point: DVector<f64>, log_density: f64, grad: DVector<f64>) -> Self {
        DensityEval {
            image: point.clone(),
            point,
            log_density,
            grad,
            state: None,
        }
    }
}

pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<DensityEval>;
}

impl LogDensity for SelectivePosterior {
    fn dim(&self) -> usize {
        SelectivePosterior::dim(self)
    }

    fn evaluate(&self, x: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<DensityEval> {
        let ev = SelectivePosterior::evaluate(self, x, warm)?;
        Ok(DensityEval {
            point: ev.zeta,
            log_density: ev.log_post,
            grad: ev.grad,
            image: ev.beta,
            state: Some(ev.wstar.w_star),
        })
    }
}

/// `π(β)·exp(−(β̂−β)ᵀΣ⁻¹(β̂−β)/2)`, the posterior that ignores selection.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub sigma_inv: DMatrix<f64>,
    pub prior: PriorSpec,
}

impl LogDensity for GaussianPosterior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn evaluate(&self, x: &DVector<f64>, _: Option<&DVector<f64>>) -> Result<DensityEval> {
        let diff = &self.mean - x;
        let sd = &self.sigma_inv * &diff;
        let value = self.prior.log_density(x) - 0.5 * diff.dot(&sd);
        let grad = self.prior.grad_log_density(x) + sd;
        Ok(DensityEval::plain(x.clone(), value, grad))
    }
}

/// Selection-aware intervals: MALA in `ζ` from `β̂` with metric `Σ`, draws
/// mapped through `Ψ`.
pub fn selective_infer(
    posterior: &SelectivePosterior,
    config: &SamplerConfig,
    levels: &[f64],
) -> Result<(CredibleIntervals, PosteriorSamples)> {
    validate_levels(levels)?;
    let samples = sample_mala(posterior, config, &posterior.geom.beta_hat, Some(&posterior.geom.sigma))?;
    let ci = credible_intervals(&samples.beta_draws, levels)?;
    Ok((ci, samples))
}

/// Unadjusted posterior for the same selection.
pub fn naive_infer(
    geom: &PosteriorGeometry,
    prior: &PriorSpec,
    config: &SamplerConfig,
    levels: &[f64],
) -> Result<(CredibleIntervals, PosteriorSamples)> {
    gaussian_infer(&geom.beta_hat, &geom.sigma, prior, config, levels)
}

fn gaussian_infer(
    mean: &DVector<f64>,
    sigma: &DMatrix<f64>,
    prior: &PriorSpec,
    config: &SamplerConfig,
    levels: &[f64],
) -> Result<(CredibleIntervals, PosteriorSamples)> {
    validate_levels(levels)?;
    prior.validate()?;
    let target = GaussianPosterior {
        mean: mean.clone(),
        sigma_inv: symmetrize(&spd_inverse(sigma, "Σ")?),
        prior: *prior,
    };
    let samples = sample_mala(&target, config, mean, Some(sigma))?;
    let ci = credible_intervals(&samples.beta_draws, levels)?;
    Ok((ci, samples))
}

/// Penalty level for a plain LASSO on a given design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum LambdaRule {
    Fixed { lambda: f64 },
    /// `κ · median ‖Xᵀξ‖_∞`, `ξ ~ N(0, σ̂²I)` with σ̂² estimated on the
    /// selection rows.
    NoiseScaled { kappa: f64 },
}

impl LambdaRule {
    pub fn lambda(&self, x: &DMatrix<f64>, y: &DVector<f64>, seed: u64) -> Result<f64> {
        match *self {
            LambdaRule::Fixed { lambda } => Ok(lambda),
            LambdaRule::NoiseScaled { kappa } => {
                let s2 = outcome_noise_estimate(y, x)?;
                noise_scaled_lambda(x, s2, kappa, 50, &mut rng_from_seed(seed))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub selected: Vec<usize>,
    pub signs: Vec<f64>,
    /// Rows (of the original data) used for inference.
    pub inference_rows: Vec<usize>,
    /// `None` for an empty selection or a degenerate inference half.
    pub intervals: Option<CredibleIntervals>,
    pub degenerate: bool,
}

/// Plain LASSO on the first `⌈f·n⌉` rows of a seeded shuffle, then the naive
/// posterior for the selected columns on the remaining rows. The noise
/// variance is `noise_sq` when given, else estimated from the held-out fit.
#[allow(clippy::too_many_arguments)]
pub fn split_infer(
    y: &DVector<f64>,
    g: &DMatrix<f64>,
    fraction: f64,
    rule: &LambdaRule,
    prior: &PriorSpec,
    levels: &[f64],
    sampler: &SamplerConfig,
    noise_sq: Option<f64>,
    seed: u64,
) -> Result<SplitOutcome> {
    if let Some(v) = noise_sq {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid("noise variance must be positive and finite"));
        }
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("split fraction must lie in (0, 1)"));
    }
    validate_levels(levels)?;
    let n = y.len();
    if g.nrows() != n {
        return Err(Error::dim("rows of G", n, g.nrows()));
    }
    let n1 = (fraction * n as f64).ceil() as usize;
    if n1 >= n || n1 < 2 {
        return Err(Error::invalid(format!("split fraction {fraction} leaves no usable half for n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let (sel_rows, inf_rows) = (perm[..n1].to_vec(), perm[n1..].to_vec());

    let g1 = select_rows(g, &sel_rows);
    let y1 = DVector::from_fn(n1, |i, _| y[sel_rows[i]]);
    let lambda = rule.lambda(&g1, &y1, seed)?;
    let sol = solve_lasso(&g1, &y1, &DVector::from_element(g.ncols(), lambda))?;
    let selected = sol.active_set.clone();
    let mut out = SplitOutcome {
        selected: selected.clone(),
        signs: sol.signs.clone(),
        inference_rows: inf_rows.clone(),
        intervals: None,
        degenerate: false,
    };
    if selected.is_empty() {
        return Ok(out);
    }
    if inf_rows.len() < selected.len() + 2 {
        out.degenerate = true;
        return Ok(out);
    }
    let g2 = select_columns(&select_rows(g, &inf_rows), &selected);
    let y2 = DVector::from_fn(inf_rows.len(), |i, _| y[inf_rows[i]]);
    let gram = g2.transpose() * &g2;
    let gram_inv = match spd_inverse(&gram, "held-out Gram matrix") {
        Ok(m) => m,
        Err(_) => {
            out.degenerate = true;
            return Ok(out);
        }
    };
    let beta_hat = least_squares(&g2, &y2)?;
    let s2 = match noise_sq {
        Some(v) => v,
        None => estimate_sigma(&y2, &g2)?,
    };
    if !(s2 > 0.0) {
        out.degenerate = true;
        return Ok(out);
    }
    let (ci, _) = gaussian_infer(&beta_hat, &(gram_inv * s2), prior, sampler, levels)?;
    out.intervals = Some(ci);
    Ok(out)
}
