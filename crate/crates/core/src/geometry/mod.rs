//! Selection-event geometry and the affine objects of the working posterior.
//!
//! For the realized `(E, s_E)` the conditional law of the active LASSO
//! values given `β̂_Ē = b` is a Gaussian in `w` centred at
//!
//! ```text
//! p(b) = K⁻¹Qᵀ(G_F̄ᵀG_Ē b + β̂⊥ − (Λ_E s_E, Λ_{E^c} z)) = P b + o,   K = QᵀQ
//! ```
//!
//! restricted to the orthant `s_E ∘ w > 0`. Rows of `Q` are stacked with the
//! active coordinates first.

mod polytope;

pub use polytope::{build_polytope, event_contains, SelectionPolytope};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, least_squares, min_eigenvalue, select_columns, serde_mat, serde_vec, spd_inverse, sym_sqrt};
use crate::selection::SelectionRecord;

/// `σ̂² = ‖y − X_Ēβ̂_Ē‖²/(n − |Ē|)`.
pub fn estimate_sigma(y: &DVector<f64>, x_ebar: &DMatrix<f64>) -> Result<f64> {
    let (n, d) = (x_ebar.nrows(), x_ebar.ncols());
    if y.len() != n {
        return Err(Error::dim("outcome length", n, y.len()));
    }
    if n < d + 2 {
        return Err(Error::invalid(format!(
            "cannot estimate the noise variance with n = {n} rows and {d} selected columns; supply sigma_sq explicitly"
        )));
    }
    if d == 0 {
        return Ok(y.norm_squared() / n as f64);
    }
    let beta = least_squares(x_ebar, y)?;
    Ok((y - x_ebar * beta).norm_squared() / (n - d) as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorGeometry {
    /// `[G_EᵀG_E + εI ; G_{E^c}ᵀG_E]`.
    #[serde(with = "serde_mat")]
    pub q: DMatrix<f64>,
    #[serde(with = "serde_mat")]
    pub qtq: DMatrix<f64>,
    /// Diagonal of the symmetric square root of `QᵀQ`.
    #[serde(with = "serde_vec")]
    pub qtq_sqrt_diag: DVector<f64>,
    #[serde(with = "serde_mat")]
    pub p: DMatrix<f64>,
    #[serde(with = "serde_vec")]
    pub o: DVector<f64>,
    #[serde(with = "serde_mat")]
    pub sigma: DMatrix<f64>,
    #[serde(with = "serde_mat")]
    pub sigma_inv: DMatrix<f64>,
    #[serde(with = "serde_vec")]
    pub beta_hat: DVector<f64>,
    pub sigma_sq: f64,
    pub eta_sq: f64,
    pub signs: Vec<f64>,
    /// Observed active LASSO values; a feasible start for the inner problem.
    #[serde(with = "serde_vec")]
    pub w_init: DVector<f64>,
    /// Stacked `G_F̄ᵀG_Ē`.
    #[serde(with = "serde_mat")]
    pub cross: DMatrix<f64>,
    /// Stacked `β̂⊥ − (Λ_E s_E, Λ_{E^c} z)`.
    #[serde(with = "serde_vec")]
    pub offset_vec: DVector<f64>,
    /// Column indices of `Ē` in the explanatory matrix.
    pub augmented: Vec<usize>,
    /// Column indices of `E` in the explanatory matrix.
    pub active: Vec<usize>,
}

impl PosteriorGeometry {
    pub fn dim_active(&self) -> usize {
        self.signs.len()
    }

    pub fn dim_target(&self) -> usize {
        self.beta_hat.len()
    }

    /// `p(b)` straight from its definition.
    pub fn p_formula(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let chol = cholesky(&self.qtq, "QᵀQ")?;
        Ok(chol.solve(&(self.q.transpose() * (&self.cross * b + &self.offset_vec))))
    }

    pub fn p_affine(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.p * b + &self.o
    }

    /// Checks shapes and the positive-definiteness invariants, e.g. after
    /// loading from JSON.
    pub fn validate(&self) -> Result<()> {
        let (e, d) = (self.dim_active(), self.dim_target());
        let checks = [
            ("Q columns", e, self.q.ncols()),
            ("QᵀQ rows", e, self.qtq.nrows()),
            ("QᵀQ columns", e, self.qtq.ncols()),
            ("sqrt diagonal", e, self.qtq_sqrt_diag.len()),
            ("P rows", e, self.p.nrows()),
            ("P columns", d, self.p.ncols()),
            ("offset", e, self.o.len()),
            ("Σ rows", d, self.sigma.nrows()),
            ("Σ columns", d, self.sigma.ncols()),
            ("Σ⁻¹ rows", d, self.sigma_inv.nrows()),
            ("initial w", e, self.w_init.len()),
            ("augmented set", d, self.augmented.len()),
            ("active set", e, self.active.len()),
        ];
        for (what, want, got) in checks {
            if want != got {
                return Err(Error::dim(what, want, got));
            }
        }
        if !(self.sigma_sq > 0.0) || !(self.eta_sq > 0.0) {
            return Err(Error::invalid("geometry variances must be positive"));
        }
        if min_eigenvalue(&self.sigma) <= 0.0 || min_eigenvalue(&self.qtq) <= 0.0 {
            return Err(Error::numerical("geometry matrices are not positive definite"));
        }
        if self.signs.iter().zip(self.w_init.iter()).any(|(s, w)| s * w <= 0.0) {
            return Err(Error::invalid("initial w violates the sign constraints"));
        }
        Ok(())
    }
}

/// Builds the geometry for a record already expressed against `g` (see
/// [`SelectionRecord::lift`]).
pub fn build_geometry(
    record: &SelectionRecord,
    g: &DMatrix<f64>,
    sigma_sq: f64,
    eta_sq: f64,
) -> Result<PosteriorGeometry> {
    if record.is_empty() {
        return Err(Error::invalid("posterior geometry needs a nonempty active set"));
    }
    if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
        return Err(Error::invalid("sigma_sq must be positive"));
    }
    if !(eta_sq > 0.0) || !eta_sq.is_finite() {
        return Err(Error::invalid("eta_sq must be positive"));
    }
    let q_dim = record.fbar.len();
    if record.lambda.len() != q_dim || record.beta_perp.len() != q_dim {
        return Err(Error::dim("record vectors over F̄", q_dim, record.beta_perp.len()));
    }
    let e = record.active.len();
    // stacked order: active then inactive positions within F̄
    let order: Vec<usize> = record.active.iter().chain(record.inactive.iter()).copied().collect();
    if order.len() != q_dim {
        return Err(Error::dim("active plus inactive positions", q_dim, order.len()));
    }
    let stacked_cols: Vec<usize> = order.iter().map(|&j| record.fbar[j]).collect();
    let active_cols = record.active_global();

    let g_stacked = select_columns(g, &stacked_cols);
    let g_e = select_columns(g, &active_cols);
    let g_ebar = select_columns(g, &record.augmented);

    let mut q = g_stacked.transpose() * &g_e;
    for i in 0..e {
        q[(i, i)] += record.epsilon;
    }
    let qtq = crate::linalg::symmetrize(&(q.transpose() * &q));
    let qtq_chol = cholesky(&qtq, "QᵀQ")?;
    let qtq_sqrt_diag = sym_sqrt(&qtq)?.diagonal();

    let cross = g_stacked.transpose() * &g_ebar;
    let mut offset_vec = DVector::zeros(q_dim);
    for (row, &j) in order.iter().enumerate() {
        let sub = if row < e {
            record.lambda[j] * record.signs[row]
        } else {
            record.lambda[j] * record.subgradient[row - e]
        };
        offset_vec[row] = record.beta_perp[j] - sub;
    }
    let qt = q.transpose();
    let p = qtq_chol.solve(&(&qt * &cross));
    let o = qtq_chol.solve(&(&qt * &offset_vec));

    let gram_ebar = g_ebar.transpose() * &g_ebar;
    let gram_inv = spd_inverse(&gram_ebar, "G_ĒᵀG_Ē")?;
    let sigma = gram_inv * sigma_sq;
    let sigma_inv = crate::linalg::symmetrize(&(gram_ebar / sigma_sq));

    let geom = PosteriorGeometry {
        q,
        qtq,
        qtq_sqrt_diag,
        p,
        o,
        sigma,
        sigma_inv,
        beta_hat: record.beta_hat.clone(),
        sigma_sq,
        eta_sq,
        signs: record.signs.clone(),
        w_init: record.beta_lasso.clone(),
        cross,
        offset_vec,
        augmented: record.augmented.clone(),
        active: active_cols,
    };
    geom.validate()?;
    Ok(geom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, standard_normal_vector};
    use crate::selection::{solve_randomized_lasso, RandomizationSpec};
    use approx::assert_relative_eq;

    pub(crate) fn seeded_geometry(seed: u64, n: usize, q: usize) -> Option<(SelectionRecord, DMatrix<f64>, PosteriorGeometry)> {
        let mut rng = rng_from_seed(seed);
        let g = DMatrix::from_column_slice(n, q, standard_normal_vector(&mut rng, n * q).as_slice());
        let beta = DVector::from_fn(q, |j, _| if j < 2 { 1.0 } else { 0.0 });
        let y = &g * beta + standard_normal_vector(&mut rng, n);
        let rand = RandomizationSpec::draw(1.0, seed, q).unwrap();
        let rec = solve_randomized_lasso(&y, &g, &DVector::from_element(q, 4.0), 0.1, &rand).unwrap();
        if rec.is_empty() {
            return None;
        }
        let geom = build_geometry(&rec, &g, 1.0, 1.0).unwrap();
        Some((rec, g, geom))
    }

    #[test]
    fn sigma_estimate_zero_for_exact_fit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let y = &x * DVector::from_vec(vec![0.3, 2.0]);
        assert!(estimate_sigma(&y, &x).unwrap() < 1e-20);
        let x_sq = DMatrix::identity(2, 2);
        assert!(estimate_sigma(&DVector::from_vec(vec![1.0, 2.0]), &x_sq).is_err());
    }

    #[test]
    fn sigma_estimate_near_truth() {
        let mut rng = rng_from_seed(5);
        let (n, d) = (500, 5);
        let x = DMatrix::from_column_slice(n, d, standard_normal_vector(&mut rng, n * d).as_slice());
        let y = &x * DVector::from_element(d, 1.0) + standard_normal_vector(&mut rng, n) * 2.0;
        let s2 = estimate_sigma(&y, &x).unwrap();
        assert!((3.5..=4.5).contains(&s2), "{s2}");
    }

    #[test]
    fn scalar_instance_matches_hand_computation() {
        let g = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0]);
        let y = DVector::from_vec(vec![2.0, 3.0, 0.5]);
        let eps = 0.1;
        let lambda = 0.5;
        let r = 0.2;
        let rand = RandomizationSpec::fixed(1.0, DVector::from_element(1, r));
        let rec = solve_randomized_lasso(&y, &g, &DVector::from_element(1, lambda), eps, &rand).unwrap();
        let gg = 6.0;
        let gy = 2.0 + 6.0 - 0.5;
        let b_lasso = (gy + r - lambda) / (gg + eps);
        assert_relative_eq!(rec.beta_lasso[0], b_lasso, epsilon = 1e-12);
        let geom = build_geometry(&rec, &g, 2.0, 0.5).unwrap();
        let qv = gg + eps;
        assert_relative_eq!(geom.q[(0, 0)], qv, epsilon = 1e-12);
        assert_relative_eq!(geom.qtq_sqrt_diag[0], qv, epsilon = 1e-10);
        assert_relative_eq!(geom.p[(0, 0)], gg / qv, epsilon = 1e-12);
        // β̂⊥ = 0 when Ē = F̄ = E
        assert_relative_eq!(geom.o[0], -lambda / qv, epsilon = 1e-12);
        assert_relative_eq!(geom.sigma[(0, 0)], 2.0 / gg, epsilon = 1e-12);
        assert_relative_eq!(geom.beta_hat[0], gy / gg, epsilon = 1e-12);
    }

    #[test]
    fn offset_vanishes_when_perp_equals_subgradient_term() {
        let (mut rec, g, _) = seeded_geometry(3, 40, 6).unwrap();
        let order: Vec<usize> = rec.active.iter().chain(rec.inactive.iter()).copied().collect();
        for (row, &j) in order.iter().enumerate() {
            rec.beta_perp[j] = if row < rec.active.len() {
                rec.lambda[j] * rec.signs[row]
            } else {
                rec.lambda[j] * rec.subgradient[row - rec.active.len()]
            };
        }
        let geom = build_geometry(&rec, &g, 1.0, 1.0).unwrap();
        assert!(geom.o.amax() < 1e-12);
    }

    #[test]
    fn affine_form_reproduces_definition() {
        let mut count = 0;
        for seed in 0..20 {
            let Some((_, _, geom)) = seeded_geometry(seed, 50, 8) else { continue };
            let mut rng = rng_from_seed(1000 + seed);
            for _ in 0..100 {
                let b = standard_normal_vector(&mut rng, geom.dim_target()) * 3.0;
                let a = geom.p_formula(&b).unwrap();
                let c = geom.p_affine(&b);
                assert!((a - c).amax() < 1e-10);
            }
            count += 1;
        }
        assert!(count > 10);
    }

    #[test]
    fn qtq_positive_definite_across_seeds() {
        for seed in 0..100 {
            if let Some((_, _, geom)) = seeded_geometry(200 + seed, 30, 6) {
                assert!(min_eigenvalue(&geom.qtq) > 0.0);
                assert!(min_eigenvalue(&geom.sigma) > 0.0);
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (_, _, geom) = seeded_geometry(7, 40, 6).unwrap();
        let text = serde_json::to_string(&geom).unwrap();
        let back: PosteriorGeometry = serde_json::from_str(&text).unwrap();
        assert_eq!(back.p, geom.p);
        assert_eq!(back.o, geom.o);
        assert_eq!(back.sigma, geom.sigma);
        back.validate().unwrap();
    }
}
