//! Priors on the target coefficients.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Flat,
    /// Independent Laplace `∝ exp(−|β_j|/(σλ))`. Values use `|x|`, gradients
    /// the pseudo-Huber surrogate.
    Laplace,
    /// Laplace with the pseudo-Huber surrogate in both value and gradient,
    /// so the two are mutually consistent.
    SmoothedLaplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    pub kind: PriorKind,
    /// `σλ`.
    pub scale: f64,
    /// Pseudo-Huber width.
    pub smoothing: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::laplace(1.0)
    }
}

impl PriorSpec {
    pub fn flat() -> Self {
        PriorSpec {
            kind: PriorKind::Flat,
            scale: 1.0,
            smoothing: 1e-4,
        }
    }

    pub fn laplace(scale: f64) -> Self {
        PriorSpec {
            kind: PriorKind::Laplace,
            scale,
            smoothing: 1e-4 * scale,
        }
    }

    pub fn smoothed_laplace(scale: f64) -> Self {
        PriorSpec {
            kind: PriorKind::SmoothedLaplace,
            ..PriorSpec::laplace(scale)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != PriorKind::Flat && (!(self.scale > 0.0) || !self.scale.is_finite()) {
            return Err(Error::invalid("Laplace prior scale must be positive"));
        }
        if !(self.smoothing > 0.0) || !self.smoothing.is_finite() {
            return Err(Error::invalid("prior smoothing width must be positive"));
        }
        Ok(())
    }

    fn huber(&self, x: f64) -> f64 {
        let d = self.smoothing;
        d * ((1.0 + (x / d).powi(2)).sqrt() - 1.0)
    }

    /// Log density up to an additive constant.
    pub fn log_density(&self, beta: &DVector<f64>) -> f64 {
        match self.kind {
            PriorKind::Flat => 0.0,
            PriorKind::Laplace => -beta.iter().map(|x| x.abs()).sum::<f64>() / self.scale,
            PriorKind::SmoothedLaplace => -beta.iter().map(|&x| self.huber(x)).sum::<f64>() / self.scale,
        }
    }

    pub fn grad_log_density(&self, beta: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            PriorKind::Flat => DVector::zeros(beta.len()),
            PriorKind::Laplace | PriorKind::SmoothedLaplace => {
                let d2 = self.smoothing * self.smoothing;
                beta.map(|x| -x / (d2 + x * x).sqrt() / self.scale)
            }
        }
    }
}
