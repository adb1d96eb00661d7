//! Principal components of densities in the tangent space at their
//! Karcher mean.

use nalgebra::DMatrix;

use super::density::SrtPoint;
use super::sphere::{exp_map, inv_exp_map, karcher_mean, KarcherParams};
use crate::error::{Error, Result};

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityPcaResult {
    pub karcher_mean: SrtPoint,
    /// Row `i` is the tangent vector of density `i` at the mean.
    pub tangent_vectors: DMatrix<f64>,
    /// All eigenvalues of the tangent covariance, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Retained directions as grid functions, one per column, orthonormal
    /// in the quadrature inner product.
    pub directions: DMatrix<f64>,
    /// `n × r_pc`; entry `(i, k)` is `⟨v_i, ũ_k⟩`.
    pub scores: DMatrix<f64>,
    pub explained: Vec<f64>,
}

impl DensityPcaResult {
    pub fn n_components(&self) -> usize {
        self.scores.ncols()
    }

    /// `exp_h̄(Σ_k X_ik ũ_k)`.
    pub fn reconstruct(&self, i: usize) -> Result<SrtPoint> {
        let v = &self.directions * self.scores.row(i).transpose();
        exp_map(&self.karcher_mean, v.as_slice())
    }
}

/// Tangent PCA with the `L²` metric: the covariance operator
/// `(1/(n−1)) Σ v_i ⊗ v_i` is diagonalized through the SVD of the
/// `√w`-weighted tangent matrix. Keeps the fewest components reaching
/// `threshold` of the total variance; at least one.
pub fn density_pca(hs: &[SrtPoint], threshold: f64, params: &KarcherParams) -> Result<DensityPcaResult> {
    let n = hs.len();
    if n < 2 {
        return Err(Error::invalid("density PCA needs at least two densities"));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid("variance threshold must lie in (0, 1]"));
    }
    let km = karcher_mean(hs, params)?;
    if !km.converged {
        return Err(Error::NonConvergence(format!(
            "Karcher mean stopped after {} iterations with gradient norm {:.3e}",
            km.iterations, km.gradient_norm
        )));
    }
    let mean = km.mean;
    let m = mean.values.len();
    let sqrt_w: Vec<f64> = mean.grid.weights.iter().map(|w| w.sqrt()).collect();
    let mut tangent = DMatrix::zeros(n, m);
    for (i, h) in hs.iter().enumerate() {
        let v = inv_exp_map(&mean, h)?;
        tangent.row_mut(i).copy_from_slice(&v);
    }
    let weighted = DMatrix::from_fn(n, m, |i, t| tangent[(i, t)] * sqrt_w[t]);
    let svd = weighted.clone().svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::numerical("SVD of tangent vectors failed"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&k| svd.singular_values[k].powi(2) / (n - 1) as f64)
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    let explained: Vec<f64> = if total > 0.0 {
        eigenvalues.iter().map(|e| e / total).collect()
    } else {
        vec![0.0; eigenvalues.len()]
    };
    let mut r = 1;
    let mut cum = explained[0];
    while cum < threshold - 1e-12 && r < explained.len() && explained[r] > 0.0 {
        cum += explained[r];
        r += 1;
    }
    let mut directions = DMatrix::zeros(m, r);
    let mut weighted_dirs = DMatrix::zeros(m, r);
    for (c, &k) in order.iter().take(r).enumerate() {
        let mut u: Vec<f64> = vt.row(k).iter().copied().collect();
        let scale = u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if let Some(first) = u.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                u.iter_mut().for_each(|x| *x = -*x);
            }
        }
        for t in 0..m {
            weighted_dirs[(t, c)] = u[t];
            directions[(t, c)] = u[t] / sqrt_w[t];
        }
    }
    let scores = &weighted * &weighted_dirs;
    Ok(DensityPcaResult {
        karcher_mean: mean,
        tangent_vectors: tangent,
        eigenvalues,
        directions,
        scores,
        explained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::density::{srt, DensitySample, Grid};

    fn bump(grid: &Grid, centre: f64, width: f64) -> SrtPoint {
        let raw: Vec<f64> = grid
            .points
            .iter()
            .map(|&t| (-0.5 * ((t - centre) / width).powi(2)).exp() + 1e-6)
            .collect();
        let total = grid.integrate(&raw);
        srt(&DensitySample {
            grid: grid.clone(),
            values: raw.iter().map(|v| v / total).collect(),
        })
    }

    fn clusters() -> Vec<SrtPoint> {
        let g = Grid::uniform(256).unwrap();
        let mut hs = Vec::new();
        for k in 0..5 {
            hs.push(bump(&g, 0.3 + 0.01 * k as f64, 0.08 + 0.002 * k as f64));
            hs.push(bump(&g, 0.7 - 0.01 * k as f64, 0.08 + 0.003 * k as f64));
        }
        hs
    }

    #[test]
    fn identical_densities_have_zero_scores() {
        let g = Grid::uniform(128).unwrap();
        let h = bump(&g, 0.4, 0.1);
        let r = density_pca(&[h.clone(), h.clone(), h], 0.9, &KarcherParams::default()).unwrap();
        assert!(r.eigenvalues.iter().all(|&e| e == 0.0));
        assert!(r.scores.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_clusters_split_by_first_score() {
        let r = density_pca(&clusters(), 0.9, &KarcherParams::default()).unwrap();
        let s: Vec<f64> = r.scores.column(0).iter().copied().collect();
        let (a, b): (Vec<_>, Vec<_>) = s.iter().enumerate().partition(|(i, _)| i % 2 == 0);
        let sign_a = a[0].1.signum();
        assert!(a.iter().all(|(_, v)| v.signum() == sign_a));
        assert!(b.iter().all(|(_, v)| v.signum() == -sign_a));
    }

    #[test]
    fn structural_invariants() {
        let hs = clusters();
        let r = density_pca(&hs, 0.99, &KarcherParams::default()).unwrap();
        let g = &r.karcher_mean.grid;
        for i in 0..hs.len() {
            let v: Vec<f64> = r.tangent_vectors.row(i).iter().copied().collect();
            assert!(g.inner(&r.karcher_mean.values, &v).abs() < 1e-8);
        }
        assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.eigenvalues.iter().all(|&e| e >= 0.0));
        // scores are L² inner products with the directions
        for k in 0..r.n_components() {
            let u: Vec<f64> = r.directions.column(k).iter().copied().collect();
            assert!((g.norm(&u) - 1.0).abs() < 1e-10);
            for i in 0..hs.len() {
                let v: Vec<f64> = r.tangent_vectors.row(i).iter().copied().collect();
                assert!((g.inner(&v, &u) - r.scores[(i, k)]).abs() < 1e-10);
            }
            let first = u.iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn reconstruction_improves_with_threshold() {
        let hs = clusters();
        let mut errors = Vec::new();
        for th in [0.5, 0.9, 0.99, 1.0] {
            let r = density_pca(&hs, th, &KarcherParams::default()).unwrap();
            let err: f64 = (0..hs.len())
                .map(|i| super::super::sphere::geodesic_distance(&r.reconstruct(i).unwrap(), &hs[i]).unwrap())
                .sum();
            errors.push(err);
        }
        assert!(errors.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{errors:?}");
        assert!(errors[3] < 1e-6, "{errors:?}");
    }

    #[test]
    fn reordering_only_flips_signs() {
        let hs = clusters();
        let r = density_pca(&hs, 0.9, &KarcherParams::default()).unwrap();
        let mut rev = hs.clone();
        rev.reverse();
        let r2 = density_pca(&rev, 0.9, &KarcherParams::default()).unwrap();
        assert_eq!(r.n_components(), r2.n_components());
        let n = hs.len();
        for k in 0..r.n_components() {
            let same = (0..n).all(|i| (r.scores[(i, k)] - r2.scores[(n - 1 - i, k)]).abs() < 1e-5);
            let flip = (0..n).all(|i| (r.scores[(i, k)] + r2.scores[(n - 1 - i, k)]).abs() < 1e-5);
            assert!(same || flip, "component {k}");
        }
    }
}
