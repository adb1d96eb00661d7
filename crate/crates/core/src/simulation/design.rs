//! Synthetic signals, designs and the projection target.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::rng::{rng_from_seed, standard_normal_vector};

const SPIKE_SCALE: f64 = 0.10;

fn laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    if rng.random::<bool>() {
        scale * e
    } else {
        -scale * e
    }
}

/// `β_j ~ π·Laplace(0, 0.1) + (1−π)·Laplace(0, s)`; the indicator marks the
/// `Laplace(0, s)` (slab) component.
pub fn draw_signals(r: usize, pi: f64, s: f64, seed: u64) -> (DVector<f64>, Vec<bool>) {
    let mut rng = rng_from_seed(seed);
    let mut beta = DVector::zeros(r);
    let mut slab = vec![false; r];
    for j in 0..r {
        let u: f64 = rng.random();
        slab[j] = u >= pi;
        beta[j] = laplace(&mut rng, if slab[j] { s } else { SPIKE_SCALE });
    }
    (beta, slab)
}

/// Rows i.i.d. `N(0, Σ(ρ))`, `Σ_ij = ρ^|i−j|`, via the AR(1) recursion.
pub fn synth_design(n: usize, r: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid("design correlation must satisfy |rho| < 1"));
    }
    let mut rng = rng_from_seed(seed);
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, r);
    for i in 0..n {
        let xi = standard_normal_vector(&mut rng, r);
        let mut prev = 0.0;
        for j in 0..r {
            let v = if j == 0 { xi[0] } else { rho * prev + innov * xi[j] };
            x[(i, j)] = v;
            prev = v;
        }
    }
    Ok(x)
}

/// Columns scaled to unit Euclidean norm, with the norms.
pub fn standardize_columns(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let norms = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.norm()));
    if norms.iter().any(|&v| v == 0.0) {
        return Err(Error::invalid("cannot standardize a zero column"));
    }
    let mut out = x.clone();
    for (j, mut c) in out.column_iter_mut().enumerate() {
        c /= norms[j];
    }
    Ok((out, norms))
}

/// `(G_ĒᵀG_Ē)⁻¹G_Ēᵀ μ` for the noiseless mean `μ = Gβ`.
pub fn projection_target(g_ebar: &DMatrix<f64>, mean: &DVector<f64>) -> Result<DVector<f64>> {
    if g_ebar.nrows() != mean.len() {
        return Err(Error::dim("mean response", g_ebar.nrows(), mean.len()));
    }
    least_squares(g_ebar, mean).map_err(|_| Error::invalid("selected design is rank deficient"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn pure_spike_variance() {
        let (b, slab) = draw_signals(100_000, 1.0, 3.0, 1);
        assert!(slab.iter().all(|&s| !s));
        let var = b.iter().map(|x| x * x).sum::<f64>() / b.len() as f64;
        assert!((var / 0.02 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn slab_count_is_binomial() {
        let (_, slab) = draw_signals(10_000, 0.95, 1.0, 2);
        let count = slab.iter().filter(|&&s| s).count() as f64;
        let sd = (10_000.0f64 * 0.05 * 0.95).sqrt();
        assert!((count - 500.0).abs() < 4.0 * sd);
    }

    #[test]
    fn ar1_correlations() {
        let x = synth_design(10_000, 4, 0.7, 3).unwrap();
        let cols: Vec<Vec<f64>> = (0..4).map(|j| x.column(j).iter().copied().collect()).collect();
        let c1 = corr(&cols[0], &cols[1]);
        let c2 = corr(&cols[1], &cols[3]);
        assert!((0.68..=0.72).contains(&c1), "{c1}");
        assert!((c2 - 0.49).abs() < 0.03, "{c2}");
        let x0 = synth_design(2000, 3, 0.0, 4).unwrap();
        let a: Vec<f64> = x0.column(0).iter().copied().collect();
        let b: Vec<f64> = x0.column(2).iter().copied().collect();
        assert!(corr(&a, &b).abs() < 4.0 / (2000f64).sqrt());
    }

    #[test]
    fn projection_target_cases() {
        let g = synth_design(50, 6, 0.5, 5).unwrap();
        let beta = DVector::from_vec(vec![1.0, 0.0, -2.0, 0.0, 0.0, 0.5]);
        let mean = &g * &beta;
        let sub = crate::linalg::select_columns(&g, &[0, 2, 4, 5]);
        let t = projection_target(&sub, &mean).unwrap();
        assert!((t - DVector::from_vec(vec![1.0, -2.0, 0.0, 0.5])).amax() < 1e-10);
        let zero = projection_target(&sub, &DVector::zeros(50)).unwrap();
        assert!(zero.amax() == 0.0);
        // misspecified: normal-equations oracle
        let mis = crate::linalg::select_columns(&g, &[1, 3]);
        let t = projection_target(&mis, &mean).unwrap();
        let oracle = (mis.transpose() * &mis).lu().solve(&(mis.transpose() * &mean)).unwrap();
        assert!((t - oracle).amax() < 1e-10);
    }
}
