//! Coverage, interval-length and screening experiments on synthetic data.
//!
//! One replication draws Laplace-mixture coefficients, an AR(1) design and a
//! Gaussian outcome, runs the randomized LASSO, and scores three interval
//! methods against the projection target of their own selected model:
//! `proposed` (selection-aware posterior), `naive` (same selection, no
//! adjustment) and `split_<f>` (plain LASSO on a fraction `f` of the rows,
//! naive posterior on the rest).

mod design;

pub use design::{draw_signals, projection_target, standardize_columns, synth_design};

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::build_geometry;
use crate::linalg::{select_columns, select_rows};
use crate::posterior::{PriorSpec, SelectivePosterior};
use crate::rng::{derive_seed, rng_from_seed, standard_normal_vector};
use crate::sampler::{naive_infer, selective_infer, split_infer, CredibleIntervals, LambdaRule, SamplerConfig};
use crate::selection::{
    default_epsilon, noise_scaled_lambda, outcome_noise_estimate, solve_randomized_lasso, RandomizationSpec,
};

/// How the randomization variance is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum EtaRule {
    /// `η² = σ̂²`, the estimated outcome noise level.
    NoiseLevel,
    Fixed { eta_sq: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub n: usize,
    pub r: usize,
    /// Mixing weight of the narrow Laplace component.
    pub pi: f64,
    /// One regime per slab scale `s`.
    pub slab_scales: Vec<f64>,
    pub rho: f64,
    pub sigma: f64,
    pub eta: EtaRule,
    pub replications: usize,
    pub level: f64,
    pub split_fractions: Vec<f64>,
    pub seed: u64,
    /// Multiplier of the noise-scaled penalty.
    pub kappa: f64,
    /// Scale design columns to unit Euclidean norm before selection.
    pub standardize: bool,
    pub prior: PriorSpec,
    pub sampler: SamplerConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n: 100,
            r: 50,
            pi: 0.95,
            slab_scales: vec![0.2, 1.0, 2.0, 4.0],
            rho: 0.7,
            sigma: 1.0,
            eta: EtaRule::NoiseLevel,
            replications: 300,
            level: 0.9,
            split_fractions: vec![0.9],
            seed: 2024,
            kappa: 1.0,
            standardize: true,
            prior: PriorSpec::flat(),
            sampler: SamplerConfig {
                n_samples: 2500,
                burn_in: 500,
                ..SamplerConfig::default()
            },
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::invalid("pi must lie in [0, 1]"));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::invalid("rho must satisfy |rho| < 1"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.slab_scales.is_empty() || self.slab_scales.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("slab_scales must be a nonempty list of positive values"));
        }
        if self.split_fractions.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::invalid("split fractions must lie in (0, 1)"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid("level must lie in (0, 1)"));
        }
        if self.n < 4 || self.r == 0 {
            return Err(Error::invalid("n must be at least 4 and r at least 1"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::invalid("kappa must be positive"));
        }
        if let EtaRule::Fixed { eta_sq } = self.eta {
            if !(eta_sq > 0.0) {
                return Err(Error::invalid("fixed eta_sq must be positive"));
            }
        }
        self.prior.validate()?;
        self.sampler.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    pub selected: Vec<usize>,
    /// Interval hit per selected coefficient.
    pub hits: Vec<bool>,
    pub lengths: Vec<f64>,
    /// Selected coefficients from the slab component.
    pub screening: usize,
    /// No intervals: empty selection or too few rows for inference.
    pub degenerate: bool,
    /// Numerical failure message, if any.
    pub failure: Option<String>,
}

impl MethodOutcome {
    fn new(method: &str, selected: Vec<usize>, slab: &[bool]) -> Self {
        let screening = selected.iter().filter(|&&j| slab[j]).count();
        MethodOutcome {
            method: method.to_string(),
            selected,
            hits: Vec::new(),
            lengths: Vec::new(),
            screening,
            degenerate: true,
            failure: None,
        }
    }

    fn score(&mut self, ci: &CredibleIntervals, level: f64, target: &DVector<f64>) -> Result<()> {
        let k = ci
            .level_index(level)
            .ok_or_else(|| Error::invalid("nominal level missing from intervals"))?;
        self.hits = (0..target.len())
            .map(|j| ci.lower[j][k] <= target[j] && target[j] <= ci.upper[j][k])
            .collect();
        self.lengths = (0..target.len()).map(|j| ci.upper[j][k] - ci.lower[j][k]).collect();
        self.degenerate = false;
        Ok(())
    }

    fn fail(&mut self, err: Error) {
        self.degenerate = true;
        self.failure = Some(err.to_string());
    }

    pub fn coverage(&self) -> Option<f64> {
        (!self.degenerate && !self.hits.is_empty())
            .then(|| self.hits.iter().filter(|&&h| h).count() as f64 / self.hits.len() as f64)
    }

    pub fn mean_length(&self) -> Option<f64> {
        (!self.degenerate && !self.lengths.is_empty())
            .then(|| self.lengths.iter().sum::<f64>() / self.lengths.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub regime: usize,
    pub slab_scale: f64,
    pub rep: usize,
    pub seed: u64,
    pub beta_true: Vec<f64>,
    pub slab: Vec<bool>,
    pub sigma_sq_hat: f64,
    pub eta_sq: f64,
    pub lambda: f64,
    pub methods: Vec<MethodOutcome>,
}

impl ReplicationRecord {
    pub fn method(&self, name: &str) -> Option<&MethodOutcome> {
        self.methods.iter().find(|m| m.method == name)
    }
}

pub fn split_method_name(f: f64) -> String {
    format!("split_{f}")
}

/// Streams used inside one replication.
mod stream {
    pub const SIGNAL: u64 = 0;
    pub const DESIGN: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const RANDOMIZATION: u64 = 3;
    pub const LAMBDA: u64 = 4;
    pub const SAMPLER_PROPOSED: u64 = 5;
    pub const SAMPLER_NAIVE: u64 = 6;
    pub const SPLIT_BASE: u64 = 100;
}

/// One replication of regime `regime` (slab scale `slab_scale`).
pub fn run_replication(
    config: &SimulationConfig,
    regime: usize,
    slab_scale: f64,
    rep: usize,
    rep_seed: u64,
) -> Result<ReplicationRecord> {
    let (n, r) = (config.n, config.r);
    let (beta_raw, slab) = draw_signals(r, config.pi, slab_scale, derive_seed(rep_seed, stream::SIGNAL));
    let raw = synth_design(n, r, config.rho, derive_seed(rep_seed, stream::DESIGN))?;
    let noise = standard_normal_vector(&mut rng_from_seed(derive_seed(rep_seed, stream::NOISE)), n) * config.sigma;
    let mean = &raw * &beta_raw;
    let y = &mean + noise;
    // coefficients are expressed on the scale of the design actually used
    let (g, beta_true) = if config.standardize {
        let (g, norms) = standardize_columns(&raw)?;
        (g, beta_raw.component_mul(&norms))
    } else {
        (raw, beta_raw)
    };

    let sigma_sq_hat = outcome_noise_estimate(&y, &g)?;
    let eta_sq = match config.eta {
        EtaRule::NoiseLevel => sigma_sq_hat,
        EtaRule::Fixed { eta_sq } => eta_sq,
    };
    let lambda = noise_scaled_lambda(
        &g,
        sigma_sq_hat,
        config.kappa,
        50,
        &mut rng_from_seed(derive_seed(rep_seed, stream::LAMBDA)),
    )?;
    let epsilon = default_epsilon(&g);
    let randomization = RandomizationSpec::draw(eta_sq, derive_seed(rep_seed, stream::RANDOMIZATION), r)?;
    let record = solve_randomized_lasso(&y, &g, &DVector::from_element(r, lambda), epsilon, &randomization)?;

    let levels = [config.level];
    let selected = record.active_global();
    let mut proposed = MethodOutcome::new("proposed", selected.clone(), &slab);
    let mut naive = MethodOutcome::new("naive", selected.clone(), &slab);
    if !selected.is_empty() {
        let target = projection_target(&select_columns(&g, &selected), &mean)?;
        match build_geometry(&record, &g, sigma_sq_hat, eta_sq) {
            Ok(geom) => {
                let naive_cfg = SamplerConfig {
                    seed: derive_seed(rep_seed, stream::SAMPLER_NAIVE),
                    ..config.sampler.clone()
                };
                match naive_infer(&geom, &config.prior, &naive_cfg, &levels) {
                    Ok((ci, _)) => naive.score(&ci, config.level, &target)?,
                    Err(e) => naive.fail(e),
                }
                let prop_cfg = SamplerConfig {
                    seed: derive_seed(rep_seed, stream::SAMPLER_PROPOSED),
                    ..config.sampler.clone()
                };
                let result = SelectivePosterior::new(geom, config.prior)
                    .and_then(|post| selective_infer(&post, &prop_cfg, &levels));
                match result {
                    Ok((ci, _)) => proposed.score(&ci, config.level, &target)?,
                    Err(e) => proposed.fail(e),
                }
            }
            Err(e) => {
                proposed.fail(Error::numerical(e.to_string()));
                naive.fail(e);
            }
        }
    }

    let mut methods = vec![proposed, naive];
    for (k, &f) in config.split_fractions.iter().enumerate() {
        let seed = derive_seed(rep_seed, stream::SPLIT_BASE + k as u64);
        let split_cfg = SamplerConfig {
            seed: derive_seed(seed, 1),
            ..config.sampler.clone()
        };
        let rule = LambdaRule::NoiseScaled { kappa: config.kappa };
        let name = split_method_name(f);
        match split_infer(&y, &g, f, &rule, &config.prior, &levels, &split_cfg, Some(sigma_sq_hat), seed) {
            Ok(out) => {
                let mut m = MethodOutcome::new(&name, out.selected.clone(), &slab);
                if let Some(ci) = &out.intervals {
                    let rows = &out.inference_rows;
                    let g2 = select_columns(&select_rows(&g, rows), &out.selected);
                    let mean2 = DVector::from_fn(rows.len(), |i, _| mean[rows[i]]);
                    let target = projection_target(&g2, &mean2)?;
                    m.score(ci, config.level, &target)?;
                }
                methods.push(m);
            }
            Err(e) => {
                let mut m = MethodOutcome::new(&name, Vec::new(), &slab);
                m.fail(e);
                methods.push(m);
            }
        }
    }

    Ok(ReplicationRecord {
        regime,
        slab_scale,
        rep,
        seed: rep_seed,
        beta_true: beta_true.iter().copied().collect(),
        slab,
        sigma_sq_hat,
        eta_sq,
        lambda,
        methods,
    })
}

/// Seed of replication `rep` in regime `regime`.
pub fn replication_seed(master: u64, regime: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(master, regime as u64), rep as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub regime: usize,
    pub slab_scale: f64,
    pub method: String,
    /// Mean over non-degenerate replications; `None` when there are none.
    pub coverage: Option<f64>,
    pub mean_length: Option<f64>,
    /// Mean over all replications.
    pub mean_screening: f64,
    pub n_reps: usize,
    pub n_scored: usize,
    pub n_degenerate: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub rows: Vec<ReportRow>,
}

impl SimulationReport {
    pub fn row(&self, regime: usize, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.regime == regime && r.method == method)
    }

    /// Long-format rows `(regime, method, metric, value, n_reps)` where
    /// `n_reps` is the denominator of that metric.
    pub fn tidy(&self) -> Vec<(f64, String, &'static str, Option<f64>, usize)> {
        let mut out = Vec::new();
        for r in &self.rows {
            out.push((r.slab_scale, r.method.clone(), "coverage", r.coverage, r.n_scored));
            out.push((r.slab_scale, r.method.clone(), "mean_length", r.mean_length, r.n_scored));
            out.push((r.slab_scale, r.method.clone(), "mean_screening", Some(r.mean_screening), r.n_reps));
            out.push((r.slab_scale, r.method.clone(), "degenerate", Some(r.n_degenerate as f64), r.n_reps));
            out.push((r.slab_scale, r.method.clone(), "failed", Some(r.n_failed as f64), r.n_reps));
        }
        out
    }
}

/// Per-regime, per-method means. Records are sorted by `(regime, rep)`
/// first, so the result does not depend on input order.
pub fn aggregate(records: &[ReplicationRecord]) -> Result<SimulationReport> {
    if records.is_empty() {
        return Err(Error::invalid("aggregate needs at least one replication record"));
    }
    let mut sorted: Vec<&ReplicationRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.regime, r.rep));
    let mut method_order: Vec<String> = Vec::new();
    for r in &sorted {
        for m in &r.methods {
            if !method_order.contains(&m.method) {
                method_order.push(m.method.clone());
            }
        }
    }
    let mut groups: BTreeMap<(usize, usize), (f64, Vec<&MethodOutcome>)> = BTreeMap::new();
    for r in &sorted {
        for m in &r.methods {
            let mi = method_order.iter().position(|x| x == &m.method).unwrap();
            groups
                .entry((r.regime, mi))
                .or_insert_with(|| (r.slab_scale, Vec::new()))
                .1
                .push(m);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let rows = groups
        .into_iter()
        .map(|((regime, mi), (slab_scale, ms))| {
            let cov: Vec<f64> = ms.iter().filter_map(|m| m.coverage()).collect();
            let len: Vec<f64> = ms.iter().filter_map(|m| m.mean_length()).collect();
            let screening: Vec<f64> = ms.iter().map(|m| m.screening as f64).collect();
            ReportRow {
                regime,
                slab_scale,
                method: method_order[mi].clone(),
                coverage: mean(&cov),
                mean_length: mean(&len),
                mean_screening: mean(&screening).unwrap_or(0.0),
                n_reps: ms.len(),
                n_scored: cov.len(),
                n_degenerate: ms.iter().filter(|m| m.degenerate).count(),
                n_failed: ms.iter().filter(|m| m.failure.is_some()).count(),
            }
        })
        .collect();
    Ok(SimulationReport { rows })
}

/// Runs every regime and replication in parallel; records come back in
/// `(regime, rep)` order. A replication that fails outright is an error.
pub fn sweep(config: &SimulationConfig) -> Result<(Vec<ReplicationRecord>, SimulationReport)> {
    config.validate()?;
    let jobs: Vec<(usize, f64, usize)> = config
        .slab_scales
        .iter()
        .enumerate()
        .flat_map(|(k, &s)| (0..config.replications).map(move |rep| (k, s, rep)))
        .collect();
    let records: Vec<ReplicationRecord> = jobs
        .into_par_iter()
        .map(|(k, s, rep)| run_replication(config, k, s, rep, replication_seed(config.seed, k, rep)))
        .collect::<Result<_>>()?;
    let report = aggregate(&records)?;
    Ok((records, report))
}
