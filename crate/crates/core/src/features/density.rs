//! Densities on a uniform grid over `[0, 1]` and their square-root
//! representation on the unit Hilbert sphere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 512;
pub const DENSITY_FLOOR: f64 = 1e-8;
const MIN_SAMPLES: usize = 5;

/// Abscissae with trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Grid {
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("grid needs at least two points"));
        }
        let h = 1.0 / (m - 1) as f64;
        let points = (0..m).map(|i| i as f64 * h).collect();
        let mut weights = vec![h; m];
        weights[0] = h / 2.0;
        weights[m - 1] = h / 2.0;
        Ok(Grid { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum BandwidthRule {
    /// `0.9·min(sd, IQR/1.34)·n^(−1/5)` on the rescaled samples.
    #[default]
    Silverman,
    Fixed { bandwidth: f64 },
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySample {
    pub grid: Grid,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrtPoint {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl SrtPoint {
    pub fn norm(&self) -> f64 {
        self.grid.norm(&self.values)
    }
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn silverman(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = sorted_quantile(&s, 0.75) - sorted_quantile(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian KDE of the affinely rescaled samples, floored and normalized
/// to unit trapezoid integral.
pub fn make_density(samples: &[f64], grid_size: usize, rule: BandwidthRule) -> Result<DensitySample> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::invalid(format!("density needs at least {MIN_SAMPLES} samples")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("density samples must be finite"));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::invalid("density samples have zero spread"));
    }
    let x: Vec<f64> = samples.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let bw = match rule {
        BandwidthRule::Silverman => silverman(&x),
        BandwidthRule::Fixed { bandwidth } => bandwidth,
    };
    if !(bw > 0.0 && bw.is_finite()) {
        return Err(Error::invalid("kernel bandwidth must be positive"));
    }
    let grid = Grid::uniform(grid_size)?;
    let norm = 1.0 / (x.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    let mut values: Vec<f64> = grid
        .points
        .iter()
        .map(|&t| {
            let s: f64 = x.iter().map(|&xi| (-0.5 * ((t - xi) / bw).powi(2)).exp()).sum();
            (s * norm).max(DENSITY_FLOOR)
        })
        .collect();
    let total = grid.integrate(&values);
    values.iter_mut().for_each(|v| *v /= total);
    // renormalizing can only lower values below the floor if total > 1
    values.iter_mut().for_each(|v| *v = v.max(DENSITY_FLOOR));
    let total = grid.integrate(&values);
    values.iter_mut().for_each(|v| *v /= total);
    Ok(DensitySample { grid, values })
}

pub fn srt(f: &DensitySample) -> SrtPoint {
    SrtPoint {
        grid: f.grid.clone(),
        values: f.values.iter().map(|v| v.sqrt()).collect(),
    }
}

pub fn inv_srt(h: &SrtPoint) -> DensitySample {
    DensitySample {
        grid: h.grid.clone(),
        values: h.values.iter().map(|v| v * v).collect(),
    }
}
