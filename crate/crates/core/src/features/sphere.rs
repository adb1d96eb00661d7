//! Geodesics, exponential maps and the Karcher mean on the sphere of
//! square-root densities.

use serde::{Deserialize, Serialize};

use super::density::{Grid, SrtPoint};
use crate::error::{Error, Result};

const TANGENT_TOLERANCE: f64 = 1e-8;

fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::invalid("square-root densities live on different grids"));
    }
    Ok(())
}

pub fn geodesic_distance(h1: &SrtPoint, h2: &SrtPoint) -> Result<f64> {
    same_grid(&h1.grid, &h2.grid)?;
    Ok(h1.grid.inner(&h1.values, &h2.values).clamp(-1.0, 1.0).acos())
}

/// Tangent vector at `h1` pointing to `h2` with length equal to their
/// geodesic distance.
pub fn inv_exp_map(h1: &SrtPoint, h2: &SrtPoint) -> Result<Vec<f64>> {
    let theta = geodesic_distance(h1, h2)?;
    if theta > std::f64::consts::PI - 1e-8 {
        return Err(Error::invalid("inverse exponential map is undefined at antipodal points"));
    }
    let c = theta.cos();
    let scale = if theta < 1e-12 { 1.0 } else { theta / theta.sin() };
    Ok(h1.values.iter().zip(&h2.values).map(|(a, b)| scale * (b - a * c)).collect())
}

/// `exp_h(v) = cos‖v‖·h + sin‖v‖·v/‖v‖`, renormalized to unit length.
pub fn exp_map(h: &SrtPoint, v: &[f64]) -> Result<SrtPoint> {
    if v.len() != h.values.len() {
        return Err(Error::dim("tangent vector", h.values.len(), v.len()));
    }
    let g = &h.grid;
    let norm = g.norm(v);
    if g.inner(&h.values, v).abs() > TANGENT_TOLERANCE * norm.max(1.0) {
        return Err(Error::invalid("vector is not tangent at the base point"));
    }
    if norm == 0.0 {
        return Ok(h.clone());
    }
    let (c, s) = (norm.cos(), norm.sin() / norm);
    let mut values: Vec<f64> = h.values.iter().zip(v).map(|(a, b)| c * a + s * b).collect();
    let len = g.norm(&values);
    values.iter_mut().for_each(|x| *x /= len);
    Ok(SrtPoint {
        grid: g.clone(),
        values,
    })
}

/// `Σ_i d(h_i, h)²`.
pub fn karcher_variance(hs: &[SrtPoint], h: &SrtPoint) -> Result<f64> {
    hs.iter().map(|x| geodesic_distance(x, h).map(|d| d * d)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KarcherParams {
    /// Stop once the mean tangent direction is shorter than this.
    pub tolerance: f64,
    /// Initial step; halved whenever a step would raise the variance.
    pub step: f64,
    pub max_iter: usize,
}

impl Default for KarcherParams {
    fn default() -> Self {
        KarcherParams {
            tolerance: 1e-6,
            step: 0.5,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KarcherResult {
    pub mean: SrtPoint,
    pub iterations: usize,
    pub converged: bool,
    /// Length of the mean tangent direction at the returned point.
    pub gradient_norm: f64,
    /// Variance at each accepted iterate, starting point first.
    pub variance_trace: Vec<f64>,
}

/// Gradient descent started at the first point.
pub fn karcher_mean(hs: &[SrtPoint], params: &KarcherParams) -> Result<KarcherResult> {
    let first = hs.first().ok_or_else(|| Error::invalid("Karcher mean needs at least one point"))?;
    if !(params.tolerance > 0.0 && params.step > 0.0) {
        return Err(Error::invalid("Karcher tolerance and step must be positive"));
    }
    let m = first.values.len();
    let mut mean = first.clone();
    let mut variance = karcher_variance(hs, &mean)?;
    let mut trace = vec![variance];
    let mut step = params.step;
    let mut iterations = 0;
    loop {
        let mut u = vec![0.0; m];
        for h in hs {
            let v = inv_exp_map(&mean, h)?;
            u.iter_mut().zip(&v).for_each(|(a, b)| *a += b / hs.len() as f64);
        }
        let gradient_norm = mean.grid.norm(&u);
        if gradient_norm < params.tolerance || iterations >= params.max_iter {
            return Ok(KarcherResult {
                converged: gradient_norm < params.tolerance,
                mean,
                iterations,
                gradient_norm,
                variance_trace: trace,
            });
        }
        iterations += 1;
        loop {
            let scaled: Vec<f64> = u.iter().map(|x| step * x).collect();
            let candidate = exp_map(&mean, &scaled)?;
            let cv = karcher_variance(hs, &candidate)?;
            if cv <= variance {
                mean = candidate;
                variance = cv;
                trace.push(cv);
                break;
            }
            step /= 2.0;
            if step < 1e-12 {
                // no descent possible at this resolution
                return Ok(KarcherResult {
                    converged: false,
                    mean,
                    iterations,
                    gradient_norm,
                    variance_trace: trace,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::density::{srt, DensitySample, DEFAULT_GRID_SIZE};

    pub(crate) fn beta_srt(grid: &Grid, a: f64, b: f64) -> SrtPoint {
        let raw: Vec<f64> = grid
            .points
            .iter()
            .map(|&t| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0) + 1e-8)
            .collect();
        let total = grid.integrate(&raw);
        srt(&DensitySample {
            grid: grid.clone(),
            values: raw.iter().map(|v| v / total).collect(),
        })
    }

    fn grid() -> Grid {
        Grid::uniform(DEFAULT_GRID_SIZE).unwrap()
    }

    #[test]
    fn distance_basics() {
        let g = grid();
        let h = beta_srt(&g, 2.0, 5.0);
        assert!(geodesic_distance(&h, &h).unwrap() < 1e-7);
        let half = |left: bool| {
            let v: Vec<f64> = g
                .points
                .iter()
                .map(|&t| if (t < 0.5) == left { 1.0 } else { 0.0 })
                .collect();
            let n = g.norm(&v);
            SrtPoint {
                grid: g.clone(),
                values: v.iter().map(|x| x / n).collect(),
            }
        };
        let d = geodesic_distance(&half(true), &half(false)).unwrap();
        assert!((d - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let other = SrtPoint {
            grid: Grid::uniform(64).unwrap(),
            values: vec![1.0; 64],
        };
        assert!(geodesic_distance(&h, &other).is_err());
    }

    #[test]
    fn distance_matches_refined_quadrature() {
        // Bhattacharyya coefficient of Beta(2,5) and Beta(5,2):
        // ∫ t^{5/2}(1−t)^{5/2} / B(2,5) = B(3.5, 3.5)/B(2,5)
        let oracle = {
            let b25 = 1.0 / 30.0;
            let b35 = statrs::function::beta::beta(3.5, 3.5);
            (b35 / b25).acos()
        };
        let g = Grid::uniform(200_001).unwrap();
        let exact = |a: f64, b: f64| {
            let vals: Vec<f64> = g
                .points
                .iter()
                .map(|&t| (t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0) * 30.0).sqrt())
                .collect();
            SrtPoint {
                grid: g.clone(),
                values: vals,
            }
        };
        let d = geodesic_distance(&exact(2.0, 5.0), &exact(5.0, 2.0)).unwrap();
        assert!((d - oracle).abs() < 1e-6, "{d} vs {oracle}");
    }

    #[test]
    fn exp_and_inverse_are_paired() {
        let g = grid();
        let h1 = beta_srt(&g, 2.0, 3.0);
        let h2 = beta_srt(&g, 4.0, 1.5);
        assert_eq!(exp_map(&h1, &vec![0.0; g.len()]).unwrap(), h1);
        let v = inv_exp_map(&h1, &h2).unwrap();
        let d = geodesic_distance(&h1, &h2).unwrap();
        assert!((g.norm(&v) - d).abs() < 1e-10);
        let back = exp_map(&h1, &v).unwrap();
        for (a, b) in back.values.iter().zip(&h2.values) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((back.norm() - 1.0).abs() < 1e-10);
        // not tangent
        assert!(exp_map(&h1, &h1.values).is_err());
    }

    #[test]
    fn identical_points_converge_at_once() {
        let g = grid();
        let h = beta_srt(&g, 3.0, 3.0);
        let r = karcher_mean(&[h.clone(), h.clone(), h.clone()], &KarcherParams::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.mean, h);
    }

    #[test]
    fn two_point_mean_is_midpoint() {
        let g = grid();
        let a = beta_srt(&g, 2.0, 6.0);
        let b = beta_srt(&g, 6.0, 2.0);
        // at the stopping point |d_a − d_b| = 2‖ū‖, so stop well below 1e-6
        let params = KarcherParams {
            tolerance: 1e-7,
            ..KarcherParams::default()
        };
        let r = karcher_mean(&[a.clone(), b.clone()], &params).unwrap();
        assert!(r.converged);
        let da = geodesic_distance(&a, &r.mean).unwrap();
        let db = geodesic_distance(&b, &r.mean).unwrap();
        assert!((da - db).abs() < 1e-6);
    }

    #[test]
    fn variance_descends_and_beats_inputs() {
        let g = grid();
        let hs: Vec<SrtPoint> = (0..8)
            .map(|k| beta_srt(&g, 3.0 + 0.2 * k as f64, 4.0 - 0.15 * k as f64))
            .collect();
        let r = karcher_mean(&hs, &KarcherParams::default()).unwrap();
        assert!(r.converged);
        assert!(r.variance_trace.windows(2).all(|w| w[1] <= w[0]));
        let at_mean = karcher_variance(&hs, &r.mean).unwrap();
        for h in &hs {
            assert!(at_mean <= karcher_variance(&hs, h).unwrap());
        }
    }
}
