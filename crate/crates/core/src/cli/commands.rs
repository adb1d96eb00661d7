//! The four subcommands. Each reads a resolved [`RunConfig`] and writes its
//! artifacts under `out_dir`.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::io::{
    fmt_f64, fmt_opt, read_grouped_labels, read_grouped_values, read_json, read_labeled_matrix, read_matrix,
    read_vector, write_csv, write_json, Provenance,
};
use crate::error::{Error, Result};
use crate::features::{
    density_pca, gsva_scores, make_density, srt, ExpressionMatrix, GeneSetCollection, SrtPoint,
};
use crate::geometry::{build_geometry, estimate_sigma, PosteriorGeometry};
use crate::linalg::select_columns;
use crate::posterior::SelectivePosterior;
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampler::{naive_infer, selective_infer, CredibleIntervals, PosteriorSamples, SamplerConfig};
use crate::selection::{
    augment_selection, compute_penalty_weights, default_epsilon, default_first_stage_lambdas, noise_scaled_lambda,
    outcome_noise_estimate, run_first_stage, solve_randomized_lasso, Dataset, FirstStageResult, RandomizationSpec,
    SelectionRecord,
};
use crate::simulation::{sweep, ReportRow};

/// Sub-seeds of the run seed.
mod stream {
    pub const RANDOMIZATION: u64 = 1;
    pub const FIRST_STAGE: u64 = 2;
    pub const SECOND_STAGE_LAMBDA: u64 = 3;
    pub const SAMPLER: u64 = 4;
    pub const NAIVE_SAMPLER: u64 = 5;
}

pub const SELECTION_FILE: &str = "selection.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionStatus {
    Selected,
    NoModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub provenance: Provenance,
    pub status: SelectionStatus,
    pub n: usize,
    pub g_labels: Vec<String>,
    pub screened: Vec<String>,
    pub selected: Vec<String>,
    pub signs: Vec<f64>,
    pub target: Vec<String>,
    pub sigma_sq_hat: f64,
    pub eta_sq: f64,
    pub lambda_base: f64,
    pub first_stage: Option<FirstStageResult>,
    /// Indexed against the full `G`.
    pub record: Option<SelectionRecord>,
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::invalid(format!("missing input: set {key} in the config")))
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let (_, y) = read_vector(require(&cfg.data.y, "data.y")?, cfg.data.y_column.as_deref())?;
    let (g_labels, g) = read_matrix(require(&cfg.data.g, "data.g")?)?;
    let (i, i_labels) = match &cfg.data.i {
        Some(p) => {
            let (labels, m) = read_matrix(p)?;
            (Some(m), labels)
        }
        None => (None, Vec::new()),
    };
    Dataset::new(y, g, i, g_labels, i_labels)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

fn labels_of(labels: &[String], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&j| labels[j].clone()).collect()
}

/// First stage (when requested), randomized second stage and `Ē`.
pub fn run_select(cfg: &RunConfig, data: &Dataset) -> Result<SelectionArtifact> {
    let prov = cfg.provenance();
    let first = cfg.select.first_stage.unwrap_or(data.i.is_some());
    let (fbar, first_stage) = if first {
        if data.i.is_none() {
            return Err(Error::invalid(
                "missing input: first stage requested but data.i (intermediary matrix I) is not set",
            ));
        }
        let lambdas =
            default_first_stage_lambdas(data, cfg.select.first_stage_kappa, derive_seed(cfg.seed, stream::FIRST_STAGE))?;
        let fs = run_first_stage(data, &lambdas)?;
        if !fs.all_converged() {
            warn!("{} first-stage queries did not converge", fs.converged.iter().filter(|c| !**c).count());
        }
        (fs.union_set.clone(), Some(fs))
    } else {
        ((0..data.p()).collect::<Vec<_>>(), None)
    };
    let user: Vec<usize> = cfg
        .select
        .augment
        .iter()
        .map(|l| {
            data.g_labels
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| Error::invalid(format!("select.augment: no column labelled {l:?}")))
        })
        .collect::<Result<_>>()?;

    let no_model = |sigma_sq_hat: f64, eta_sq: f64, lambda_base: f64, first_stage, record| SelectionArtifact {
        provenance: prov.clone(),
        status: SelectionStatus::NoModel,
        n: data.n(),
        g_labels: data.g_labels.clone(),
        screened: labels_of(&data.g_labels, &fbar),
        selected: Vec::new(),
        signs: Vec::new(),
        target: Vec::new(),
        sigma_sq_hat,
        eta_sq,
        lambda_base,
        first_stage,
        record,
    };
    let sigma_sq_hat = outcome_noise_estimate(&data.y, &data.g)?;
    let eta_sq = cfg.select.eta_sq.unwrap_or(sigma_sq_hat);
    if fbar.is_empty() {
        info!("first stage screened no columns");
        return Ok(no_model(sigma_sq_hat, eta_sq, 0.0, first_stage, None));
    }

    let x = select_columns(&data.g, &fbar);
    let lambda_base = match cfg.select.lambda {
        Some(l) => l,
        None => noise_scaled_lambda(
            &x,
            sigma_sq_hat,
            cfg.select.kappa,
            50,
            &mut rng_from_seed(derive_seed(cfg.seed, stream::SECOND_STAGE_LAMBDA)),
        )?,
    };
    let lambda = match &first_stage {
        Some(fs) => compute_penalty_weights(&fs.multiplicity, fs.n_queries(), lambda_base)?,
        None => nalgebra::DVector::from_element(fbar.len(), lambda_base),
    };
    let epsilon = cfg.select.epsilon.unwrap_or_else(|| default_epsilon(&x));
    let randomization = RandomizationSpec::draw(eta_sq, derive_seed(cfg.seed, stream::RANDOMIZATION), fbar.len())?;
    let record = solve_randomized_lasso(&data.y, &x, &lambda, epsilon, &randomization)?;
    if !record.converged {
        return Err(Error::NonConvergence(format!(
            "randomized LASSO stopped after {} sweeps",
            record.iterations
        )));
    }
    let active: Vec<usize> = record.active.iter().map(|&k| fbar[k]).collect();
    let augmented = augment_selection(&active, &user, data.p())?;
    let record = record.lift(&data.g, &data.y, &fbar, augmented)?;
    if record.is_empty() {
        return Ok(no_model(sigma_sq_hat, eta_sq, lambda_base, first_stage, Some(record)));
    }
    Ok(SelectionArtifact {
        provenance: prov,
        status: SelectionStatus::Selected,
        n: data.n(),
        g_labels: data.g_labels.clone(),
        screened: labels_of(&data.g_labels, &fbar),
        selected: labels_of(&data.g_labels, &record.active_global()),
        signs: record.signs.clone(),
        target: labels_of(&data.g_labels, &record.augmented),
        sigma_sq_hat,
        eta_sq,
        lambda_base,
        first_stage,
        record: Some(record),
    })
}

pub fn cmd_select(cfg: &RunConfig) -> Result<SelectionArtifact> {
    let data = load_dataset(cfg)?;
    let artifact = run_select(cfg, &data)?;
    ensure_out_dir(cfg)?;
    write_json(&cfg.out_dir.join(SELECTION_FILE), &artifact)?;
    info!("selected {} of {} columns", artifact.selected.len(), data.p());
    Ok(artifact)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodIntervals {
    pub method: String,
    pub intervals: CredibleIntervals,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub method: String,
    pub acceptance_rate: f64,
    pub chains: Vec<crate::sampler::ChainDiagnostics>,
    pub ess: Vec<f64>,
    pub rhat: Vec<f64>,
}

impl SamplerDiagnostics {
    fn new(method: &str, s: &PosteriorSamples) -> Self {
        SamplerDiagnostics {
            method: method.to_string(),
            acceptance_rate: s.acceptance_rate,
            chains: s.chains.clone(),
            ess: s.ess.clone(),
            rhat: s.rhat.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub screened_size: usize,
    pub selected: Vec<String>,
    pub signs: Vec<f64>,
    pub target: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub config: RunConfig,
    pub status: SelectionStatus,
    pub selection: SelectionSummary,
    pub sigma_sq: Option<f64>,
    pub eta_sq: f64,
    pub levels: Vec<f64>,
    pub results: Vec<MethodIntervals>,
}

fn interval_rows(labels: &[String], m: &MethodIntervals) -> Vec<Vec<String>> {
    let ci = &m.intervals;
    (0..ci.n_coefficients())
        .map(|j| {
            let mut row = vec![labels[j].clone(), m.method.clone(), fmt_f64(ci.median[j])];
            for k in 0..ci.levels.len() {
                row.push(fmt_f64(ci.lower[j][k]));
                row.push(fmt_f64(ci.upper[j][k]));
            }
            row
        })
        .collect()
}

pub fn interval_header(levels: &[f64]) -> Vec<String> {
    let mut h = vec!["coefficient".to_string(), "method".into(), "median".into()];
    for l in levels {
        h.push(format!("lower_{l}"));
        h.push(format!("upper_{l}"));
    }
    h
}

pub fn cmd_infer(cfg: &RunConfig) -> Result<RunReport> {
    let sel_path = cfg.infer.selection.clone().unwrap_or_else(|| cfg.out_dir.join(SELECTION_FILE));
    let artifact: SelectionArtifact = read_json(&sel_path)?;
    let data = load_dataset(cfg)?;
    if artifact.n != data.n() || artifact.g_labels != data.g_labels {
        return Err(Error::invalid(format!(
            "selection artifact {} was made from different data",
            sel_path.display()
        )));
    }
    ensure_out_dir(cfg)?;
    let prov = cfg.provenance();
    let summary = SelectionSummary {
        screened_size: artifact.screened.len(),
        selected: artifact.selected.clone(),
        signs: artifact.signs.clone(),
        target: artifact.target.clone(),
    };
    let mut report = RunReport {
        provenance: prov.clone(),
        config: cfg.clone(),
        status: artifact.status,
        selection: summary,
        sigma_sq: None,
        eta_sq: artifact.eta_sq,
        levels: cfg.levels.clone(),
        results: Vec::new(),
    };
    let mut diagnostics = Vec::new();
    let record = match (&artifact.status, &artifact.record) {
        (SelectionStatus::Selected, Some(r)) => Some(r),
        (SelectionStatus::Selected, None) => return Err(Error::invalid("selection artifact lacks its record")),
        _ => None,
    };
    if let Some(record) = record {
        let g_ebar = select_columns(&data.g, &record.augmented);
        let sigma_sq = match cfg.infer.sigma_sq {
            Some(s) => s,
            None => estimate_sigma(&data.y, &g_ebar)?,
        };
        report.sigma_sq = Some(sigma_sq);
        let geom = build_geometry(record, &data.g, sigma_sq, artifact.eta_sq)?;
        write_json(&cfg.out_dir.join("geometry.json"), &geom)?;
        let sampler = SamplerConfig {
            seed: derive_seed(cfg.seed, stream::SAMPLER),
            ..cfg.infer.sampler.clone()
        };
        let naive_geom: Option<PosteriorGeometry> = cfg.infer.naive.then(|| geom.clone());
        let post = SelectivePosterior::new(geom, cfg.infer.prior)?;
        let (ci, samples) = selective_infer(&post, &sampler, &cfg.levels)?;
        report.results.push(MethodIntervals {
            method: "proposed".into(),
            intervals: ci,
        });
        diagnostics.push(SamplerDiagnostics::new("proposed", &samples));
        if let Some(geom) = naive_geom {
            let sampler = SamplerConfig {
                seed: derive_seed(cfg.seed, stream::NAIVE_SAMPLER),
                ..cfg.infer.sampler.clone()
            };
            let (ci, samples) = naive_infer(&geom, &cfg.infer.prior, &sampler, &cfg.levels)?;
            report.results.push(MethodIntervals {
                method: "naive".into(),
                intervals: ci,
            });
            diagnostics.push(SamplerDiagnostics::new("naive", &samples));
        }
    } else {
        info!("no model selected; writing empty interval table");
    }
    let rows: Vec<Vec<String>> = report
        .results
        .iter()
        .flat_map(|m| interval_rows(&artifact.target, m))
        .collect();
    write_csv(&cfg.out_dir.join("intervals.csv"), &prov, &interval_header(&cfg.levels), &rows)?;
    write_json(&cfg.out_dir.join("report.json"), &report)?;
    write_json(
        &cfg.out_dir.join("diagnostics.json"),
        &serde_json::json!({ "provenance": prov, "samplers": diagnostics }),
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub provenance: Provenance,
    pub config: crate::simulation::SimulationConfig,
    pub rows: Vec<ReportRow>,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationSummary> {
    let sim = crate::simulation::SimulationConfig {
        seed: cfg.seed,
        level: *cfg.levels.first().ok_or_else(|| Error::invalid("no level given"))?,
        ..cfg.simulate.clone()
    };
    let (_, report) = sweep(&sim)?;
    ensure_out_dir(cfg)?;
    let prov = cfg.provenance();
    let header: Vec<String> = ["slab_scale", "method", "metric", "value", "n_reps"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = report
        .tidy()
        .into_iter()
        .map(|(s, method, metric, value, n)| vec![fmt_f64(s), method, metric.to_string(), fmt_opt(value), n.to_string()])
        .collect();
    write_csv(&cfg.out_dir.join("sweep.csv"), &prov, &header, &rows)?;
    let summary = SimulationSummary {
        provenance: prov,
        config: sim,
        rows: report.rows,
    };
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FeaturesReport {
    pub provenance: Option<Provenance>,
    pub skipped_gene_sets: Vec<String>,
    pub unknown_genes: Vec<String>,
    pub skipped_densities: Vec<String>,
    pub eigenvalues: Vec<f64>,
    pub explained: Vec<f64>,
}

fn gsva_step(cfg: &RunConfig, report: &mut FeaturesReport, prov: &Provenance) -> Result<()> {
    let (Some(expr_path), Some(sets_path)) = (&cfg.features.expression, &cfg.features.gene_sets) else {
        if cfg.features.expression.is_some() || cfg.features.gene_sets.is_some() {
            return Err(Error::invalid("GSVA needs both features.expression and features.gene_sets"));
        }
        return Ok(());
    };
    let (genes, samples, values) = read_labeled_matrix(expr_path)?;
    let z = ExpressionMatrix::new(values, genes, samples)?;
    let p = z.n_genes();
    let mut kept = Vec::new();
    for (name, members) in read_grouped_labels(sets_path)? {
        let mut idx = Vec::new();
        for m in members {
            match z.genes.iter().position(|g| *g == m) {
                Some(i) => idx.push(i),
                None => report.unknown_genes.push(format!("{name}:{m}")),
            }
        }
        idx.sort_unstable();
        idx.dedup();
        if idx.is_empty() || idx.len() >= p {
            warn!("gene set {name:?} skipped: {} of {p} genes", idx.len());
            report.skipped_gene_sets.push(name);
        } else {
            kept.push((name, idx));
        }
    }
    if kept.is_empty() {
        return Err(Error::invalid("no usable gene sets"));
    }
    let sets = GeneSetCollection::new(kept);
    let scores = gsva_scores(&z, &sets, &cfg.features.gsva)?;
    let mut header = vec!["sample".to_string()];
    header.extend(sets.names.iter().cloned());
    let rows: Vec<Vec<String>> = (0..z.n_samples())
        .map(|j| {
            let mut r = vec![z.samples[j].clone()];
            r.extend((0..sets.len()).map(|k| fmt_f64(scores[(k, j)])));
            r
        })
        .collect();
    write_csv(&cfg.out_dir.join("gsva_scores.csv"), prov, &header, &rows)
}

fn density_step(cfg: &RunConfig, report: &mut FeaturesReport, prov: &Provenance) -> Result<()> {
    let Some(path) = &cfg.features.densities else {
        return Ok(());
    };
    let mut labels = Vec::new();
    let mut hs: Vec<SrtPoint> = Vec::new();
    for (id, vals) in read_grouped_values(path)? {
        match make_density(&vals, cfg.features.grid_size, cfg.features.bandwidth) {
            Ok(f) => {
                labels.push(id);
                hs.push(srt(&f));
            }
            Err(e) => {
                warn!("density {id:?} skipped: {e}");
                report.skipped_densities.push(id);
            }
        }
    }
    let res = density_pca(&hs, cfg.features.variance_threshold, &cfg.features.karcher)?;
    let mut header = vec!["sample".to_string()];
    header.extend((1..=res.n_components()).map(|k| format!("PC{k}")));
    let rows: Vec<Vec<String>> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut r = vec![l.clone()];
            r.extend((0..res.n_components()).map(|k| fmt_f64(res.scores[(i, k)])));
            r
        })
        .collect();
    report.eigenvalues = res.eigenvalues.clone();
    report.explained = res.explained.clone();
    write_csv(&cfg.out_dir.join("density_pca_scores.csv"), prov, &header, &rows)
}

pub fn cmd_features(cfg: &RunConfig) -> Result<FeaturesReport> {
    if cfg.features.expression.is_none() && cfg.features.gene_sets.is_none() && cfg.features.densities.is_none() {
        return Err(Error::invalid(
            "missing input: set features.expression and features.gene_sets, or features.densities",
        ));
    }
    ensure_out_dir(cfg)?;
    let prov = cfg.provenance();
    let mut report = FeaturesReport {
        provenance: Some(prov.clone()),
        ..FeaturesReport::default()
    };
    gsva_step(cfg, &mut report, &prov)?;
    density_step(cfg, &mut report, &prov)?;
    write_json(&cfg.out_dir.join("features_report.json"), &report)?;
    Ok(report)
}
