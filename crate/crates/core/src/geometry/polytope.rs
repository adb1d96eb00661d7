//! Affine description of the selection event for a fixed sign vector.
//!
//! With `A = G_EᵀG_E + εI` and `C = G_{E^c}ᵀG_E A⁻¹`, the event that the
//! randomized LASSO returns `(E, s_E)` with `‖z‖_∞ < 1` is
//!
//! ```text
//! U β̂_Ē + V r + W β̂⊥ > t
//! ```
//!
//! with row blocks `diag(s)A⁻¹[...]` (active signs), then the inactive
//! subgradient bounded below and above.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::cholesky;

#[derive(Debug, Clone)]
pub struct SelectionPolytope {
    pub u: DMatrix<f64>,
    /// Columns indexed by position in `F̄`.
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub t: DVector<f64>,
}

impl SelectionPolytope {
    pub fn n_rows(&self) -> usize {
        self.t.len()
    }

    /// `U β̂ + V r + W β̂⊥ − t`.
    pub fn slack(&self, beta_hat: &DVector<f64>, r: &DVector<f64>, beta_perp: &DVector<f64>) -> Result<DVector<f64>> {
        if beta_hat.len() != self.u.ncols() {
            return Err(Error::dim("least-squares estimate", self.u.ncols(), beta_hat.len()));
        }
        if r.len() != self.v.ncols() {
            return Err(Error::dim("randomization", self.v.ncols(), r.len()));
        }
        if beta_perp.len() != self.w.ncols() {
            return Err(Error::dim("orthogonal statistic", self.w.ncols(), beta_perp.len()));
        }
        Ok(&self.u * beta_hat + &self.v * r + &self.w * beta_perp - &self.t)
    }
}

/// `g_fbar` holds the screened columns, `g_ebar` the augmented ones; `active`
/// indexes `g_fbar` and `lambda` runs over all of `F̄`.
pub fn build_polytope(
    g_fbar: &DMatrix<f64>,
    g_ebar: &DMatrix<f64>,
    active: &[usize],
    signs: &[f64],
    lambda: &DVector<f64>,
    epsilon: f64,
) -> Result<SelectionPolytope> {
    let q = g_fbar.ncols();
    let e = active.len();
    if e == 0 {
        return Err(Error::invalid("the selection polytope needs a nonempty active set"));
    }
    if signs.len() != e {
        return Err(Error::dim("sign vector", e, signs.len()));
    }
    if lambda.len() != q {
        return Err(Error::dim("penalty weights", q, lambda.len()));
    }
    if g_ebar.nrows() != g_fbar.nrows() {
        return Err(Error::dim("rows of G_Ē", g_fbar.nrows(), g_ebar.nrows()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let inactive: Vec<usize> = (0..q).filter(|j| !active.contains(j)).collect();
    let k = inactive.len();
    let d = g_ebar.ncols();

    let g_e = DMatrix::from_fn(g_fbar.nrows(), e, |i, j| g_fbar[(i, active[j])]);
    let g_ec = DMatrix::from_fn(g_fbar.nrows(), k, |i, j| g_fbar[(i, inactive[j])]);
    let mut a = g_e.transpose() * &g_e;
    for i in 0..e {
        a[(i, i)] += epsilon;
    }
    let a_inv = cholesky(&a, "G_EᵀG_E + εI")?.inverse();
    let s = DMatrix::from_diagonal(&DVector::from_column_slice(signs));
    let lambda_e = DVector::from_fn(e, |i, _| lambda[active[i]]);
    let lambda_ec = DVector::from_fn(k, |i, _| lambda[inactive[i]]);
    let lam_s = lambda_e.component_mul(&DVector::from_column_slice(signs));

    let ge_gebar = g_e.transpose() * g_ebar;
    let gec_gebar = g_ec.transpose() * g_ebar;
    let c = g_ec.transpose() * &g_e * &a_inv;

    let rows = e + 2 * k;
    let mut u = DMatrix::zeros(rows, d);
    let mut v = DMatrix::zeros(rows, q);
    let mut t = DVector::zeros(rows);

    let s_ainv = &s * &a_inv;
    u.rows_mut(0, e).copy_from(&(&s_ainv * &ge_gebar));
    for (col, &j) in active.iter().enumerate() {
        v.view_mut((0, j), (e, 1)).copy_from(&s_ainv.column(col));
    }
    t.rows_mut(0, e).copy_from(&(&s_ainv * &lam_s));

    if k > 0 {
        let u2 = &gec_gebar - &c * &ge_gebar;
        let c_lam = &c * &lam_s;
        u.rows_mut(e, k).copy_from(&u2);
        u.rows_mut(e + k, k).copy_from(&(-&u2));
        for (col, &j) in active.iter().enumerate() {
            v.view_mut((e, j), (k, 1)).copy_from(&(-c.column(col)));
            v.view_mut((e + k, j), (k, 1)).copy_from(&c.column(col));
        }
        for (col, &j) in inactive.iter().enumerate() {
            v[(e + col, j)] = 1.0;
            v[(e + k + col, j)] = -1.0;
        }
        t.rows_mut(e, k).copy_from(&(-&lambda_ec - &c_lam));
        t.rows_mut(e + k, k).copy_from(&(-&lambda_ec + &c_lam));
    }

    Ok(SelectionPolytope {
        u,
        w: v.clone(),
        v,
        t,
    })
}

/// True iff every row of the slack is strictly positive. Exact zeros count
/// as outside and are logged.
pub fn event_contains(
    poly: &SelectionPolytope,
    beta_hat: &DVector<f64>,
    r: &DVector<f64>,
    beta_perp: &DVector<f64>,
) -> Result<bool> {
    let slack = poly.slack(beta_hat, r, beta_perp)?;
    if slack.iter().any(|&x| x == 0.0) {
        log::debug!("selection event evaluated exactly on its boundary");
    }
    Ok(slack.iter().all(|&x| x > 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::least_squares;
    use crate::rng::{rng_from_seed, standard_normal_vector};
    use crate::selection::{solve_randomized_lasso, RandomizationSpec};

    struct Fixture {
        g: DMatrix<f64>,
        beta: DVector<f64>,
        lambda: DVector<f64>,
        eps: f64,
    }

    fn fixture(seed: u64, n: usize, q: usize) -> Fixture {
        let mut rng = rng_from_seed(seed);
        let g = DMatrix::from_column_slice(n, q, standard_normal_vector(&mut rng, n * q).as_slice());
        let beta = DVector::from_fn(q, |j, _| if j == 0 { 1.0 } else if j == 1 { -0.6 } else { 0.0 });
        Fixture {
            g,
            beta,
            lambda: DVector::from_fn(q, |j, _| 3.0 + 0.5 * j as f64),
            eps: 0.05,
        }
    }

    fn statistics(g: &DMatrix<f64>, y: &DVector<f64>, ebar: &[usize]) -> (DVector<f64>, DVector<f64>) {
        let g_ebar = crate::linalg::select_columns(g, ebar);
        let bh = least_squares(&g_ebar, y).unwrap();
        let perp = g.transpose() * (y - &g_ebar * &bh);
        (bh, perp)
    }

    #[test]
    fn shapes_follow_block_structure() {
        let f = fixture(1, 30, 5);
        let g_ebar = crate::linalg::select_columns(&f.g, &[0, 3]);
        let poly = build_polytope(&f.g, &g_ebar, &[0, 3], &[1.0, -1.0], &f.lambda, f.eps).unwrap();
        assert_eq!(poly.n_rows(), 2 + 2 * 3);
        assert_eq!((poly.u.ncols(), poly.v.ncols(), poly.w.ncols()), (2, 5, 5));
    }

    #[test]
    fn full_active_set_has_sign_block_only() {
        let f = fixture(2, 30, 3);
        let poly = build_polytope(&f.g, &f.g, &[0, 1, 2], &[1.0, 1.0, -1.0], &f.lambda, f.eps).unwrap();
        assert_eq!(poly.n_rows(), 3);
    }

    #[test]
    fn generating_observation_is_inside() {
        for seed in 0..20 {
            let f = fixture(10 + seed, 40, 5);
            let mut rng = rng_from_seed(seed);
            let y = &f.g * &f.beta + standard_normal_vector(&mut rng, 40);
            let rand = RandomizationSpec::draw(1.0, seed, 5).unwrap();
            let rec = solve_randomized_lasso(&y, &f.g, &f.lambda, f.eps, &rand).unwrap();
            if rec.is_empty() {
                continue;
            }
            let g_ebar = crate::linalg::select_columns(&f.g, &rec.active);
            let poly = build_polytope(&f.g, &g_ebar, &rec.active, &rec.signs, &f.lambda, f.eps).unwrap();
            assert!(event_contains(&poly, &rec.beta_hat, &rand.realized, &rec.beta_perp).unwrap());
        }
    }

    #[test]
    fn line_search_on_randomization_leaves_the_event() {
        let f = fixture(3, 40, 4);
        let y = &f.g * &f.beta + standard_normal_vector(&mut rng_from_seed(3), 40);
        let rand = RandomizationSpec::draw(1.0, 4, 4).unwrap();
        let rec = solve_randomized_lasso(&y, &f.g, &f.lambda, f.eps, &rand).unwrap();
        assert!(!rec.is_empty());
        let g_ebar = crate::linalg::select_columns(&f.g, &rec.active);
        let poly = build_polytope(&f.g, &g_ebar, &rec.active, &rec.signs, &f.lambda, f.eps).unwrap();
        let j = rec.active[0];
        let mut r = rand.realized.clone();
        let mut left = false;
        for _ in 0..200 {
            r[j] -= rec.signs[0] * 5.0;
            if !event_contains(&poly, &rec.beta_hat, &r, &rec.beta_perp).unwrap() {
                left = true;
                break;
            }
        }
        assert!(left);
    }

    #[test]
    fn membership_matches_direct_solver_on_fresh_draws() {
        let f = fixture(4, 25, 3);
        let mut rng = rng_from_seed(99);
        let y0 = &f.g * &f.beta + standard_normal_vector(&mut rng, 25);
        let r0 = RandomizationSpec::draw(1.0, 5, 3).unwrap();
        let rec = solve_randomized_lasso(&y0, &f.g, &f.lambda, f.eps, &r0).unwrap();
        assert!(!rec.is_empty());
        let g_ebar = crate::linalg::select_columns(&f.g, &rec.active);
        let poly = build_polytope(&f.g, &g_ebar, &rec.active, &rec.signs, &f.lambda, f.eps).unwrap();
        let mut inside = 0;
        for _ in 0..1000 {
            let y = &f.g * &f.beta + standard_normal_vector(&mut rng, 25);
            let r = standard_normal_vector(&mut rng, 3);
            let (bh, perp) = statistics(&f.g, &y, &rec.active);
            let member = event_contains(&poly, &bh, &r, &perp).unwrap();
            let fresh = solve_randomized_lasso(&y, &f.g, &f.lambda, f.eps, &RandomizationSpec::fixed(1.0, r)).unwrap();
            let same = fresh.active == rec.active && fresh.signs == rec.signs;
            assert_eq!(member, same);
            inside += member as usize;
        }
        assert!(inside > 0 && inside < 1000);
    }

    #[test]
    fn union_over_sign_patterns_partitions_draws() {
        let f = fixture(5, 25, 3);
        let mut rng = rng_from_seed(7);
        let active = vec![0usize, 1];
        let g_ebar = crate::linalg::select_columns(&f.g, &active);
        let polys: Vec<(Vec<f64>, SelectionPolytope)> = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
            .iter()
            .map(|s| (s.to_vec(), build_polytope(&f.g, &g_ebar, &active, s, &f.lambda, f.eps).unwrap()))
            .collect();
        for _ in 0..300 {
            let y = &f.g * &f.beta + standard_normal_vector(&mut rng, 25);
            let r = standard_normal_vector(&mut rng, 3) * 2.0;
            let (bh, perp) = statistics(&f.g, &y, &active);
            let fresh = solve_randomized_lasso(&y, &f.g, &f.lambda, f.eps, &RandomizationSpec::fixed(4.0, r.clone())).unwrap();
            let hits: Vec<&Vec<f64>> = polys
                .iter()
                .filter(|(_, p)| event_contains(p, &bh, &r, &perp).unwrap())
                .map(|(s, _)| s)
                .collect();
            if fresh.active == active {
                assert_eq!(hits, vec![&fresh.signs]);
            } else {
                assert!(hits.is_empty());
            }
        }
    }

    #[test]
    fn empty_active_set_rejected() {
        let f = fixture(6, 10, 2);
        assert!(build_polytope(&f.g, &f.g, &[], &[], &f.lambda, f.eps).is_err());
    }
}
