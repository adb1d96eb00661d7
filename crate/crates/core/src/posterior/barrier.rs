//! Log-barrier `C(w) = Σ_j log(1 + a_j/(s_j w_j))` on the sign orthant.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::PosteriorGeometry;

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierPenalty {
    pub scales: DVector<f64>,
    pub signs: Vec<f64>,
}

impl BarrierPenalty {
    pub fn new(scales: DVector<f64>, signs: Vec<f64>) -> Result<Self> {
        if scales.len() != signs.len() {
            return Err(Error::dim("barrier signs", scales.len(), signs.len()));
        }
        if scales.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::invalid("barrier scales must be positive"));
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::invalid("barrier signs must be ±1"));
        }
        Ok(BarrierPenalty { scales, signs })
    }

    /// `a_j = (QᵀQ)^{1/2}_{jj}/η`.
    pub fn from_geometry(geom: &PosteriorGeometry) -> Result<Self> {
        let eta = geom.eta_sq.sqrt();
        Self::new(&geom.qtq_sqrt_diag / eta, geom.signs.clone())
    }

    /// Same penalty with every scale multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(&self.scales * t, self.signs.clone())
    }

    pub fn dim(&self) -> usize {
        self.signs.len()
    }

    pub fn is_feasible(&self, w: &DVector<f64>) -> bool {
        w.len() == self.dim() && w.iter().zip(&self.signs).all(|(x, s)| s * x > 0.0)
    }

    fn check(&self, w: &DVector<f64>) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::dim("barrier argument", self.dim(), w.len()));
        }
        if !self.is_feasible(w) {
            return Err(Error::invalid("barrier evaluated outside the sign orthant"));
        }
        Ok(())
    }

    pub fn value(&self, w: &DVector<f64>) -> Result<f64> {
        self.check(w)?;
        Ok(self.coords(w).map(|(a, u, _)| (a / u).ln_1p()).sum())
    }

    pub fn gradient(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(w)?;
        Ok(DVector::from_iterator(
            self.dim(),
            self.coords(w).map(|(a, u, s)| s * (1.0 / (u + a) - 1.0 / u)),
        ))
    }

    /// Diagonal of `∇²C`.
    pub fn hessian_diag(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(w)?;
        Ok(DVector::from_iterator(
            self.dim(),
            self.coords(w)
                .map(|(a, u, _)| 1.0 / (u * u) - 1.0 / ((u + a) * (u + a))),
        ))
    }

    /// Diagonal of the third derivative tensor.
    pub fn third_diag(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(w)?;
        Ok(DVector::from_iterator(
            self.dim(),
            self.coords(w)
                .map(|(a, u, s)| s * (2.0 / (u + a).powi(3) - 2.0 / u.powi(3))),
        ))
    }

    fn coords<'a>(&'a self, w: &'a DVector<f64>) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
        self.scales
            .iter()
            .zip(&self.signs)
            .zip(w.iter())
            .map(|((&a, &s), &x)| (a, s * x, s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn unit_point_gives_log_two() {
        let b = BarrierPenalty::new(DVector::from_element(1, 1.0), vec![1.0]).unwrap();
        let v = b.value(&DVector::from_element(1, 1.0)).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn decays_monotonically_to_zero() {
        let b = BarrierPenalty::new(DVector::from_element(1, 1.0), vec![-1.0]).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..30 {
            let w = DVector::from_element(1, -(2f64.powi(k)));
            let v = b.value(&w).unwrap();
            assert!(v < last && v > 0.0);
            last = v;
        }
        assert!(last < 1e-8);
    }

    #[test]
    fn rejects_infeasible_point() {
        let b = BarrierPenalty::new(DVector::from_element(2, 1.0), vec![1.0, -1.0]).unwrap();
        assert!(b.value(&DVector::from_vec(vec![1.0, 1.0])).is_err());
        assert!(b.gradient(&DVector::from_vec(vec![0.0, -1.0])).is_err());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = rng_from_seed(17);
        let h = 1e-6;
        for _ in 0..100 {
            let a: f64 = rng.random_range(0.1..5.0);
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let w0: f64 = s * rng.random_range(0.2..4.0);
            let b = BarrierPenalty::new(DVector::from_element(1, a), vec![s]).unwrap();
            let at = |x: f64| DVector::from_element(1, x);
            let fd1 = (b.value(&at(w0 + h)).unwrap() - b.value(&at(w0 - h)).unwrap()) / (2.0 * h);
            let fd2 = (b.gradient(&at(w0 + h)).unwrap()[0] - b.gradient(&at(w0 - h)).unwrap()[0]) / (2.0 * h);
            let fd3 = (b.hessian_diag(&at(w0 + h)).unwrap()[0] - b.hessian_diag(&at(w0 - h)).unwrap()[0]) / (2.0 * h);
            let g1 = b.gradient(&at(w0)).unwrap()[0];
            let g2 = b.hessian_diag(&at(w0)).unwrap()[0];
            let g3 = b.third_diag(&at(w0)).unwrap()[0];
            assert!(((fd1 - g1) / g1).abs() < 1e-5, "first {fd1} {g1}");
            assert!(((fd2 - g2) / g2).abs() < 1e-5, "second {fd2} {g2}");
            assert!(((fd3 - g3) / g3).abs() < 1e-5, "third {fd3} {g3}");
        }
    }
}
