//! Metropolis-adjusted Langevin sampler with burn-in step-size adaptation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{effective_sample_size, split_rhat};
use super::{DensityEval, LogDensity};
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::rng::{derive_seed, rng_from_seed, standard_normal_vector};

const MIN_ACCEPTANCE: f64 = 0.01;
const ADAPT_EXPONENT: f64 = 0.6;
const FALLBACK_ASCENT_STEPS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Total iterations per chain, burn-in included.
    pub n_samples: usize,
    pub burn_in: usize,
    /// Initial Langevin step size `h`.
    pub step_size: f64,
    pub target_acceptance: f64,
    pub seed: u64,
    pub n_chains: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_samples: 5000,
            burn_in: 1000,
            step_size: 0.5,
            target_acceptance: 0.574,
            seed: 0,
            n_chains: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples <= self.burn_in {
            return Err(Error::invalid("n_samples must exceed burn_in"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::invalid("target_acceptance must lie in (0, 1)"));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::invalid("step_size must be positive"));
        }
        if self.n_chains == 0 {
            return Err(Error::invalid("n_chains must be at least 1"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.n_samples - self.burn_in
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    pub step_size: f64,
    pub ess: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    /// Retained draws, chains stacked in order, one row per draw.
    pub zeta_draws: DMatrix<f64>,
    /// Image of every retained draw under the target's map.
    pub beta_draws: DMatrix<f64>,
    pub acceptance_rate: f64,
    pub chains: Vec<ChainDiagnostics>,
    /// Summed per-chain ESS per coordinate.
    pub ess: Vec<f64>,
    pub rhat: Vec<f64>,
}

struct ChainOutput {
    zeta: Vec<DVector<f64>>,
    beta: Vec<DVector<f64>>,
    diag: ChainDiagnostics,
}

fn check_eval(ev: &DensityEval) -> Result<()> {
    if ev.log_density.is_nan() || !ev.grad.iter().all(|v| v.is_finite()) {
        return Err(Error::SamplerAbort("non-finite log density or gradient".into()));
    }
    Ok(())
}

/// Evaluates at `init`; when the value is not finite, takes a few small
/// gradient-ascent steps first.
fn initial_state<T: LogDensity + ?Sized>(target: &T, init: &DVector<f64>, step: f64) -> Result<DensityEval> {
    let mut ev = target.evaluate(init, None)?;
    let mut x = init.clone();
    let mut k = 0;
    while !ev.log_density.is_finite() && k < FALLBACK_ASCENT_STEPS {
        if !ev.grad.iter().all(|v| v.is_finite()) {
            break;
        }
        x += &ev.grad * (0.5 * step * step);
        ev = target.evaluate(&x, ev.state.as_ref())?;
        k += 1;
    }
    if !ev.log_density.is_finite() {
        return Err(Error::SamplerAbort("log density is not finite at the initial point".into()));
    }
    check_eval(&ev)?;
    Ok(ev)
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    init: &DVector<f64>,
    chol: Option<&DMatrix<f64>>,
    seed: u64,
) -> Result<ChainOutput> {
    let dim = init.len();
    let mut rng = rng_from_seed(seed);
    // M = LLᵀ; identity when no metric is supplied
    let l = chol.cloned().unwrap_or_else(|| DMatrix::identity(dim, dim));
    let m = &l * l.transpose();
    let drift = |g: &DVector<f64>| &m * g;
    let whiten = |v: &DVector<f64>| -> DVector<f64> {
        l.solve_lower_triangular(v).expect("metric factor is nonsingular")
    };

    let mut current = initial_state(target, init, config.step_size)?;
    let mut x = current.point.clone();
    let mut log_h = config.step_size.ln();
    let mut tail_log_h = Vec::new();
    let mut accepted_post = 0usize;
    let mut accepted_burn = 0usize;
    let retained = config.retained();
    let mut zeta = Vec::with_capacity(retained);
    let mut beta = Vec::with_capacity(retained);

    for it in 0..config.n_samples {
        let h = log_h.exp();
        let h2 = h * h;
        let xi = standard_normal_vector(&mut rng, dim);
        let mean_fwd = &x + drift(&current.grad) * (0.5 * h2);
        let proposal = &mean_fwd + &l * xi.clone() * h;
        let cand = target.evaluate(&proposal, current.state.as_ref())?;
        check_eval(&cand)?;
        let log_alpha = if cand.log_density == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            let mean_bwd = &proposal + drift(&cand.grad) * (0.5 * h2);
            let fwd = xi.norm_squared() / 2.0;
            let bwd = whiten(&(&x - mean_bwd)).norm_squared() / (2.0 * h2);
            cand.log_density - current.log_density + fwd - bwd
        };
        if log_alpha.is_nan() {
            return Err(Error::SamplerAbort("acceptance ratio is not a number".into()));
        }
        let u: f64 = rng.random();
        let accept = u.ln() < log_alpha;
        if accept {
            x = proposal;
            current = cand;
        }
        if it < config.burn_in {
            accepted_burn += accept as usize;
            let alpha = log_alpha.min(0.0).exp();
            let gain = ((it + 1) as f64).powf(-ADAPT_EXPONENT);
            log_h += gain * (alpha - config.target_acceptance);
            if it >= config.burn_in / 2 {
                tail_log_h.push(log_h);
            }
            if it + 1 == config.burn_in && !tail_log_h.is_empty() {
                log_h = tail_log_h.iter().sum::<f64>() / tail_log_h.len() as f64;
            }
        } else {
            accepted_post += accept as usize;
            zeta.push(x.clone());
            beta.push(current.image.clone());
        }
    }

    let acceptance_rate = accepted_post as f64 / retained as f64;
    if acceptance_rate < MIN_ACCEPTANCE {
        return Err(Error::SamplerAbort(format!(
            "acceptance rate {acceptance_rate:.4} below {MIN_ACCEPTANCE} with step size {:.3e}",
            log_h.exp()
        )));
    }
    let ess = (0..dim)
        .map(|j| {
            let col: Vec<f64> = zeta.iter().map(|z| z[j]).collect();
            effective_sample_size(&col)
        })
        .collect();
    Ok(ChainOutput {
        zeta,
        beta,
        diag: ChainDiagnostics {
            acceptance_rate,
            burn_in_acceptance_rate: if config.burn_in > 0 {
                accepted_burn as f64 / config.burn_in as f64
            } else {
                f64::NAN
            },
            step_size: log_h.exp(),
            ess,
        },
    })
}

/// Runs `config.n_chains` independent chains from `init`. `metric` is an
/// optional proposal covariance (preconditioner); chain `c` is seeded with
/// `derive_seed(config.seed, c)`.
pub fn sample_mala<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    init: &DVector<f64>,
    metric: Option<&DMatrix<f64>>,
) -> Result<PosteriorSamples> {
    config.validate()?;
    let dim = target.dim();
    if init.len() != dim {
        return Err(Error::dim("initial point", dim, init.len()));
    }
    let chol = match metric {
        Some(m) => {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::dim("metric", dim, m.nrows()));
            }
            Some(cholesky(m, "sampler metric")?.l())
        }
        None => None,
    };
    let outputs: Vec<ChainOutput> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(target, config, init, chol.as_ref(), derive_seed(config.seed, c as u64)))
        .collect::<Result<_>>()?;

    let retained = config.retained();
    let rows = retained * outputs.len();
    let image_dim = outputs[0].beta.first().map_or(dim, |b| b.len());
    let mut zeta_draws = DMatrix::zeros(rows, dim);
    let mut beta_draws = DMatrix::zeros(rows, image_dim);
    for (c, out) in outputs.iter().enumerate() {
        for (k, (z, b)) in out.zeta.iter().zip(&out.beta).enumerate() {
            zeta_draws.row_mut(c * retained + k).copy_from(&z.transpose());
            beta_draws.row_mut(c * retained + k).copy_from(&b.transpose());
        }
    }
    let mut ess = vec![0.0; dim];
    for out in &outputs {
        for (e, v) in ess.iter_mut().zip(&out.diag.ess) {
            *e += v;
        }
    }
    let rhat = (0..dim)
        .map(|j| {
            let cols: Vec<Vec<f64>> = outputs.iter().map(|o| o.zeta.iter().map(|z| z[j]).collect()).collect();
            let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
            split_rhat(&refs)
        })
        .collect();
    let acceptance_rate =
        outputs.iter().map(|o| o.diag.acceptance_rate).sum::<f64>() / outputs.len() as f64;
    Ok(PosteriorSamples {
        zeta_draws,
        beta_draws,
        acceptance_rate,
        chains: outputs.into_iter().map(|o| o.diag).collect(),
        ess,
        rhat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct StdGaussian(usize);

    impl LogDensity for StdGaussian {
        fn dim(&self) -> usize {
            self.0
        }
        fn evaluate(&self, x: &DVector<f64>, _: Option<&DVector<f64>>) -> Result<DensityEval> {
            Ok(DensityEval::plain(x.clone(), -0.5 * x.norm_squared(), -x))
        }
    }

    struct Broken;

    impl LogDensity for Broken {
        fn dim(&self) -> usize {
            1
        }
        fn evaluate(&self, x: &DVector<f64>, _: Option<&DVector<f64>>) -> Result<DensityEval> {
            let v = if x[0] > 0.5 { f64::NAN } else { 0.0 };
            Ok(DensityEval::plain(x.clone(), v, DVector::zeros(1)))
        }
    }

    #[test]
    fn standard_gaussian_moments() {
        let cfg = SamplerConfig {
            seed: 3,
            ..SamplerConfig::default()
        };
        let s = sample_mala(&StdGaussian(2), &cfg, &DVector::zeros(2), None).unwrap();
        for j in 0..2 {
            let col = s.zeta_draws.column(j);
            let mean = col.mean();
            let var = col.variance();
            assert!(mean.abs() < 4.0 * (var / s.ess[j]).sqrt(), "mean {mean}");
            assert!((var - 1.0).abs() < 0.1, "var {var}");
        }
        assert!((0.4..=0.7).contains(&s.acceptance_rate), "{}", s.acceptance_rate);
    }

    #[test]
    fn same_seed_same_draws() {
        let cfg = SamplerConfig {
            n_samples: 600,
            burn_in: 100,
            seed: 9,
            n_chains: 2,
            ..SamplerConfig::default()
        };
        let a = sample_mala(&StdGaussian(3), &cfg, &DVector::zeros(3), None).unwrap();
        let b = sample_mala(&StdGaussian(3), &cfg, &DVector::zeros(3), None).unwrap();
        assert_eq!(a.zeta_draws, b.zeta_draws);
        assert_eq!(a.zeta_draws.nrows(), 1000);
    }

    #[test]
    fn preconditioned_gaussian_recovers_covariance() {
        struct Correlated {
            prec: DMatrix<f64>,
        }
        impl LogDensity for Correlated {
            fn dim(&self) -> usize {
                2
            }
            fn evaluate(&self, x: &DVector<f64>, _: Option<&DVector<f64>>) -> Result<DensityEval> {
                let g = -(&self.prec * x);
                Ok(DensityEval::plain(x.clone(), 0.5 * x.dot(&g), g))
            }
        }
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 1.9, 1.9, 1.0]);
        let target = Correlated {
            prec: cov.clone().try_inverse().unwrap(),
        };
        let cfg = SamplerConfig {
            n_samples: 20000,
            burn_in: 2000,
            seed: 4,
            ..SamplerConfig::default()
        };
        let s = sample_mala(&target, &cfg, &DVector::zeros(2), Some(&cov)).unwrap();
        let x = &s.zeta_draws;
        let n = x.nrows() as f64;
        let c01 = x.column(0).dot(&x.column(1)) / n;
        assert!((c01 - 1.9).abs() < 0.2, "{c01}");
        assert!((0.4..=0.7).contains(&s.acceptance_rate));
        assert!(s.rhat.iter().all(|r| (r - 1.0).abs() < 0.05 || r.is_nan()));
    }

    #[test]
    fn nan_density_aborts() {
        let cfg = SamplerConfig {
            n_samples: 500,
            burn_in: 100,
            step_size: 2.0,
            ..SamplerConfig::default()
        };
        let err = sample_mala(&Broken, &cfg, &DVector::zeros(1), None).unwrap_err();
        assert!(matches!(err, Error::SamplerAbort(_)));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SamplerConfig {
            n_samples: 10,
            burn_in: 10,
            ..SamplerConfig::default()
        };
        assert!(sample_mala(&StdGaussian(1), &cfg, &DVector::zeros(1), None).is_err());
    }
}
