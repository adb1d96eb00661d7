//! Equal-tailed credible intervals from retained draws.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleIntervals {
    pub levels: Vec<f64>,
    /// Posterior median per coefficient.
    pub median: Vec<f64>,
    /// `lower[j][k]` is the bound for coefficient `j` at `levels[k]`.
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl CredibleIntervals {
    pub fn empty(levels: &[f64]) -> Self {
        CredibleIntervals {
            levels: levels.to_vec(),
            median: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn n_coefficients(&self) -> usize {
        self.median.len()
    }

    pub fn level_index(&self, level: f64) -> Option<usize> {
        self.levels.iter().position(|&l| (l - level).abs() < 1e-12)
    }
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n−1)q`). Reorders `values`.
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    let n = values.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let (_, &mut a, right) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if lo + 1 >= n {
        return a;
    }
    let b = right.iter().copied().fold(f64::INFINITY, f64::min);
    a + (h - lo as f64) * (b - a)
}

pub fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::invalid("at least one credible level is required"));
    }
    if let Some(bad) = levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::invalid(format!("credible level {bad} must lie in (0, 1)")));
    }
    Ok(())
}

/// Intervals from a draws matrix with one row per draw.
pub fn credible_intervals(draws: &DMatrix<f64>, levels: &[f64]) -> Result<CredibleIntervals> {
    validate_levels(levels)?;
    if draws.nrows() < MIN_DRAWS {
        return Err(Error::invalid(format!(
            "credible intervals need at least {MIN_DRAWS} draws, got {}",
            draws.nrows()
        )));
    }
    let d = draws.ncols();
    let mut out = CredibleIntervals {
        levels: levels.to_vec(),
        median: Vec::with_capacity(d),
        lower: Vec::with_capacity(d),
        upper: Vec::with_capacity(d),
    };
    let mut buf = vec![0.0; draws.nrows()];
    for j in 0..d {
        buf.copy_from_slice(draws.column(j).as_slice());
        out.median.push(quantile(&mut buf, 0.5));
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for &level in levels {
            let tail = (1.0 - level) / 2.0;
            lo.push(quantile(&mut buf, tail));
            hi.push(quantile(&mut buf, 1.0 - tail));
        }
        out.lower.push(lo);
        out.upper.push(hi);
    }
    Ok(out)
}
