//! Working selection-aware posterior.
//!
//! In `β`-space
//!
//! ```text
//! log π(β) − (β̂−β)ᵀΣ⁻¹(β̂−β)/2
//!     + inf_{b,w} {(b−β)ᵀΣ⁻¹(b−β)/2 + (w−Pb−o)ᵀK(w−Pb−o)/2η² + C(w)}
//! ```
//!
//! and, after the change of variables `β = Ψ(ζ)`, a closed form in `ζ` whose
//! gradient needs only `w*(ζ)` and small dense products. Notation below:
//! `B = η⁻²ΣPᵀK`, `N = K/η² + ∇²C(w*)`, `D = η⁻²N⁻¹KP = ∂w*/∂ζ`.

mod barrier;
mod prior;
mod wstar;

pub use barrier::BarrierPenalty;
pub use prior::{PriorKind, PriorSpec};
pub use wstar::{solve_w_star, WStarSolution, GRAD_TOLERANCE, MAX_NEWTON_STEPS};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::PosteriorGeometry;
use crate::linalg::cholesky;
use wstar::newton_minimize;

#[derive(Debug, Clone)]
pub struct ReparamEvaluation {
    pub zeta: DVector<f64>,
    pub beta: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub log_det_jacobian: f64,
    pub log_post: f64,
    pub grad: DVector<f64>,
    pub wstar: WStarSolution,
}

/// Geometry, barrier and prior bundled into one evaluator.
#[derive(Debug, Clone)]
pub struct SelectivePosterior {
    pub geom: PosteriorGeometry,
    pub penalty: BarrierPenalty,
    pub prior: PriorSpec,
    /// `B = η⁻²ΣPᵀK`.
    b_mat: DMatrix<f64>,
    /// `KP`.
    kp: DMatrix<f64>,
}

struct Core {
    wstar: WStarSolution,
    beta: DVector<f64>,
    jacobian: DMatrix<f64>,
    log_det: f64,
    d: DMatrix<f64>,
    n_inv: DMatrix<f64>,
    resid: DVector<f64>,
}

impl SelectivePosterior {
    pub fn new(geom: PosteriorGeometry, prior: PriorSpec) -> Result<Self> {
        let penalty = BarrierPenalty::from_geometry(&geom)?;
        Self::with_penalty(geom, penalty, prior)
    }

    pub fn with_penalty(geom: PosteriorGeometry, penalty: BarrierPenalty, prior: PriorSpec) -> Result<Self> {
        geom.validate()?;
        prior.validate()?;
        if penalty.dim() != geom.dim_active() {
            return Err(Error::dim("barrier", geom.dim_active(), penalty.dim()));
        }
        let kp = &geom.qtq * &geom.p;
        let b_mat = &geom.sigma * kp.transpose() / geom.eta_sq;
        Ok(SelectivePosterior {
            geom,
            penalty,
            prior,
            b_mat,
            kp,
        })
    }

    pub fn dim(&self) -> usize {
        self.geom.dim_target()
    }

    pub fn solve_w_star(&self, zeta: &DVector<f64>, init: Option<&DVector<f64>>) -> Result<WStarSolution> {
        let sol = solve_w_star(&self.geom, &self.penalty, zeta, init)?;
        if !sol.converged {
            return Err(Error::NonConvergence(format!(
                "inner barrier problem: gradient norm {:.3e} after {} Newton steps",
                sol.grad_norm, sol.iterations
            )));
        }
        Ok(sol)
    }

    /// `Ψ(ζ) = ζ + B(Pζ + o − w*)`.
    pub fn psi(&self, zeta: &DVector<f64>) -> Result<DVector<f64>> {
        let w = self.solve_w_star(zeta, None)?;
        Ok(self.psi_with(zeta, &w.w_star))
    }

    fn psi_with(&self, zeta: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        zeta + &self.b_mat * (self.geom.p_affine(zeta) - w)
    }

    /// `𝒥 = I + B(P − D)` and `log det 𝒥` given a converged `w*`.
    pub fn jacobian(&self, wstar: &WStarSolution) -> Result<(DMatrix<f64>, f64)> {
        let (jac, log_det, _, _) = self.jacobian_parts(wstar)?;
        Ok((jac, log_det))
    }

    /// Returns `(𝒥, log det 𝒥, D, N⁻¹)`.
    #[allow(clippy::type_complexity)]
    fn jacobian_parts(&self, wstar: &WStarSolution) -> Result<(DMatrix<f64>, f64, DMatrix<f64>, DMatrix<f64>)> {
        let inv_eta = 1.0 / self.geom.eta_sq;
        let mut n = &self.geom.qtq * inv_eta;
        n.set_diagonal(&(n.diagonal() + &wstar.hessian_c));
        let n_inv = cholesky(&n, "N = K/η² + ∇²C")?.inverse();
        let d = &n_inv * &self.kp * inv_eta;
        let dim = self.dim();
        let jac = DMatrix::identity(dim, dim) + &self.b_mat * (&self.geom.p - &d);
        let lu = jac.clone().lu();
        let det = lu.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::numerical(format!("Jacobian determinant {det} is not positive")));
        }
        Ok((jac, det.ln(), d, n_inv))
    }

    fn core(&self, zeta: &DVector<f64>, init: Option<&DVector<f64>>) -> Result<Core> {
        if zeta.len() != self.dim() {
            return Err(Error::dim("zeta", self.dim(), zeta.len()));
        }
        let wstar = self.solve_w_star(zeta, init)?;
        let beta = self.psi_with(zeta, &wstar.w_star);
        let (jacobian, log_det, d, n_inv) = self.jacobian_parts(&wstar)?;
        let resid = &wstar.w_star - self.geom.p_affine(zeta);
        Ok(Core {
            wstar,
            beta,
            jacobian,
            log_det,
            d,
            n_inv,
            resid,
        })
    }

    fn value_from(&self, zeta: &DVector<f64>, c: &Core) -> Result<f64> {
        let g = &self.geom;
        let si_psi = &g.sigma_inv * &c.beta;
        let quad = c.resid.dot(&(&g.qtq * &c.resid)) / (2.0 * g.eta_sq);
        let barrier = self.penalty.value(&c.wstar.w_star)?;
        Ok(self.prior.log_density(&c.beta) + c.log_det + g.beta_hat.dot(&si_psi) - zeta.dot(&si_psi)
            + 0.5 * zeta.dot(&(&g.sigma_inv * zeta))
            + quad
            + barrier)
    }

    fn grad_from(&self, zeta: &DVector<f64>, c: &Core) -> Result<DVector<f64>> {
        let g = &self.geom;
        let score = self.prior.grad_log_density(&c.beta) + &g.sigma_inv * (&g.beta_hat - zeta);
        let main = c.jacobian.transpose() * score;
        let third = self.penalty.third_diag(&c.wstar.w_star)?;
        let j_inv = c
            .jacobian
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::numerical("Jacobian is singular"))?;
        // T = D 𝒥⁻¹ B N⁻¹; the log-det gradient is Dᵀ(C̃ ∘ diag T)
        let t = &c.d * j_inv * &self.b_mat * &c.n_inv;
        let weights = third.component_mul(&t.diagonal());
        Ok(main + c.d.transpose() * weights)
    }

    /// Value, gradient and the intermediate objects at `ζ`.
    pub fn evaluate(&self, zeta: &DVector<f64>, w_init: Option<&DVector<f64>>) -> Result<ReparamEvaluation> {
        let c = self.core(zeta, w_init)?;
        let log_post = self.value_from(zeta, &c)?;
        let grad = self.grad_from(zeta, &c)?;
        if !log_post.is_finite() || !grad.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("non-finite log-posterior or gradient"));
        }
        Ok(ReparamEvaluation {
            zeta: zeta.clone(),
            beta: c.beta,
            jacobian: c.jacobian,
            log_det_jacobian: c.log_det,
            log_post,
            grad,
            wstar: c.wstar,
        })
    }

    pub fn log_posterior_zeta(&self, zeta: &DVector<f64>) -> Result<f64> {
        let c = self.core(zeta, None)?;
        self.value_from(zeta, &c)
    }

    pub fn grad_log_posterior_zeta(&self, zeta: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.core(zeta, None)?;
        self.grad_from(zeta, &c)
    }

    /// The joint infimum over `(b, w)` at `β`, returning the value and the
    /// minimizing `b`.
    pub fn selection_infimum(&self, beta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let g = &self.geom;
        let (d, e) = (g.dim_target(), g.dim_active());
        if beta.len() != d {
            return Err(Error::dim("beta", d, beta.len()));
        }
        let w0 = solve_w_star(g, &self.penalty, beta, None)?.w_star;
        let x0 = DVector::from_iterator(d + e, beta.iter().chain(w0.iter()).copied());
        let inv_eta = 1.0 / g.eta_sq;
        let pt_k = self.kp.transpose();
        let mut hess = DMatrix::zeros(d + e, d + e);
        hess.view_mut((0, 0), (d, d))
            .copy_from(&(&g.sigma_inv + &pt_k * &g.p * inv_eta));
        hess.view_mut((0, d), (d, e)).copy_from(&(-&pt_k * inv_eta));
        hess.view_mut((d, 0), (e, d)).copy_from(&(-&self.kp * inv_eta));
        let k_eta = &g.qtq * inv_eta;
        let out = newton_minimize(x0, |x| {
            let b = x.rows(0, d).into_owned();
            let w = x.rows(d, e).into_owned();
            if !self.penalty.is_feasible(&w) {
                return None;
            }
            let db = &b - beta;
            let r = &w - g.p_affine(&b);
            let kr = &k_eta * &r;
            let sib = &g.sigma_inv * &db;
            let value = 0.5 * db.dot(&sib) + 0.5 * r.dot(&kr) + self.penalty.value(&w).ok()?;
            let gb = sib - g.p.transpose() * &kr;
            let gw = kr + self.penalty.gradient(&w).ok()?;
            let grad = DVector::from_iterator(d + e, gb.iter().chain(gw.iter()).copied());
            let mut h = hess.clone();
            let mut block = k_eta.clone();
            block.set_diagonal(&(block.diagonal() + self.penalty.hessian_diag(&w).ok()?));
            h.view_mut((d, d), (e, e)).copy_from(&block);
            Some((value, grad, h))
        })?;
        if !out.converged {
            return Err(Error::NonConvergence(format!(
                "joint infimum: gradient norm {:.3e} after {} Newton steps",
                out.grad_norm, out.iterations
            )));
        }
        Ok((out.value, out.x.rows(0, d).into_owned()))
    }

    /// `β`-space working log-posterior, up to a global constant.
    pub fn log_posterior_beta(&self, beta: &DVector<f64>) -> Result<f64> {
        let (inf, _) = self.selection_infimum(beta)?;
        let g = &self.geom;
        let diff = &g.beta_hat - beta;
        Ok(self.prior.log_density(beta) - 0.5 * diff.dot(&(&g.sigma_inv * &diff)) + inf)
    }
}
