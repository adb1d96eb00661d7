//! Inner barrier problem
//!
//! ```text
//! w*(ζ) = argmin_w (w − p(ζ))ᵀK(w − p(ζ))/2η² + C(w),   s_E ∘ w > 0
//! ```
//!
//! solved by damped Newton, plus the generic Newton driver shared with the
//! joint `(b, w)` problem.

use nalgebra::{DMatrix, DVector};

use super::barrier::BarrierPenalty;
use crate::error::{Error, Result};
use crate::geometry::PosteriorGeometry;

pub const MAX_NEWTON_STEPS: usize = 50;
pub const GRAD_TOLERANCE: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 80;
const POLISH_STEPS: usize = 2;

#[derive(Debug, Clone)]
pub struct WStarSolution {
    pub w_star: DVector<f64>,
    pub grad_norm: f64,
    /// Diagonal of `∇²C(w*)`.
    pub hessian_c: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at `w*`.
    pub value: f64,
}

pub(crate) struct NewtonOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Newton for a smooth strictly convex function on an open domain.
/// `eval` returns `None` outside the domain, otherwise value, gradient and
/// Hessian.
pub(crate) fn newton_minimize<F>(x0: DVector<f64>, mut eval: F) -> Result<NewtonOutcome>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>, DMatrix<f64>)>,
{
    let (mut f, mut g, mut h) =
        eval(&x0).ok_or_else(|| Error::invalid("Newton start point is outside the domain"))?;
    let mut x = x0;
    let mut iterations = 0;
    let mut converged = g.norm() < GRAD_TOLERANCE;
    while !converged && iterations < MAX_NEWTON_STEPS {
        iterations += 1;
        let d = newton_direction(&h, &g)?;
        let slope = g.dot(&d);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = &x + &d * t;
            if let Some((fc, gc, hc)) = eval(&cand) {
                // the Newton direction also descends ‖g‖², which stays
                // measurable once f has hit its rounding floor
                let sufficient = fc <= f + ARMIJO * t * slope
                    || gc.norm() <= (1.0 - ARMIJO * t) * g.norm();
                if fc.is_finite() && sufficient {
                    accepted = Some((cand, fc, gc, hc));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((xn, fn_, gn, hn)) => {
                x = xn;
                f = fn_;
                g = gn;
                h = hn;
            }
            None => break,
        }
        converged = g.norm() < GRAD_TOLERANCE;
    }
    if converged {
        // a couple of full steps to reach the rounding floor
        for _ in 0..POLISH_STEPS {
            let Ok(d) = newton_direction(&h, &g) else { break };
            let cand = &x + &d;
            match eval(&cand) {
                Some((fc, gc, hc)) if gc.norm() < g.norm() => {
                    x = cand;
                    f = fc;
                    g = gc;
                    h = hc;
                }
                _ => break,
            }
        }
    }
    if !g.iter().all(|v| v.is_finite()) || !f.is_finite() {
        return Err(Error::numerical("non-finite value in the inner Newton solve"));
    }
    Ok(NewtonOutcome {
        x,
        value: f,
        grad_norm: g.norm(),
        iterations,
        converged,
    })
}

fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let d = match h.clone().cholesky() {
        Some(c) => c.solve(g),
        None => h
            .clone()
            .lu()
            .solve(g)
            .ok_or_else(|| Error::numerical("singular Newton system"))?,
    };
    Ok(-d)
}

/// Value, gradient and Hessian of the inner objective at a feasible `w`.
pub(crate) fn inner_objective(
    geom: &PosteriorGeometry,
    penalty: &BarrierPenalty,
    center: &DVector<f64>,
    w: &DVector<f64>,
) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
    if !penalty.is_feasible(w) {
        return None;
    }
    let inv_eta = 1.0 / geom.eta_sq;
    let diff = w - center;
    let kd = &geom.qtq * &diff;
    let value = 0.5 * inv_eta * diff.dot(&kd) + penalty.value(w).ok()?;
    let grad = kd * inv_eta + penalty.gradient(w).ok()?;
    let mut hess = &geom.qtq * inv_eta;
    hess.set_diagonal(&(hess.diagonal() + penalty.hessian_diag(w).ok()?));
    Some((value, grad, hess))
}

/// `w*(ζ)`, started from `init` when it is feasible and from the observed
/// LASSO values otherwise.
pub fn solve_w_star(
    geom: &PosteriorGeometry,
    penalty: &BarrierPenalty,
    zeta: &DVector<f64>,
    init: Option<&DVector<f64>>,
) -> Result<WStarSolution> {
    if zeta.len() != geom.dim_target() {
        return Err(Error::dim("zeta", geom.dim_target(), zeta.len()));
    }
    if penalty.dim() != geom.dim_active() {
        return Err(Error::dim("barrier", geom.dim_active(), penalty.dim()));
    }
    let center = geom.p_affine(zeta);
    let start = match init {
        Some(w) if penalty.is_feasible(w) => w.clone(),
        _ => geom.w_init.clone(),
    };
    let out = newton_minimize(start, |w| inner_objective(geom, penalty, &center, w))?;
    if !out.converged {
        log::debug!(
            "w* did not converge: grad norm {:.3e} after {} steps",
            out.grad_norm,
            out.iterations
        );
    }
    let hessian_c = penalty.hessian_diag(&out.x)?;
    Ok(WStarSolution {
        w_star: out.x,
        grad_norm: out.grad_norm,
        hessian_c,
        iterations: out.iterations,
        converged: out.converged,
        value: out.value,
    })
}
