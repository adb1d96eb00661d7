//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::io::Provenance;
use crate::error::{Error, Result};
use crate::features::{BandwidthRule, GsvaParams, KarcherParams, DEFAULT_GRID_SIZE, DEFAULT_VARIANCE_THRESHOLD};
use crate::posterior::PriorSpec;
use crate::sampler::{validate_levels, SamplerConfig};
use crate::simulation::SimulationConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Outcome CSV.
    pub y: Option<PathBuf>,
    /// Column of `y` to use when it has several.
    pub y_column: Option<String>,
    /// Explanatory matrix CSV, one row per sample.
    pub g: Option<PathBuf>,
    /// Intermediary phenotypes CSV for the first stage.
    pub i: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectConfig {
    /// Run the first-stage screen; defaults to whether `data.i` is given.
    pub first_stage: Option<bool>,
    pub first_stage_kappa: f64,
    /// Base second-stage penalty; noise-scaled with `kappa` when absent.
    pub lambda: Option<f64>,
    pub kappa: f64,
    pub epsilon: Option<f64>,
    pub eta_sq: Option<f64>,
    /// Labels of `G` columns always added to the target set.
    pub augment: Vec<String>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            first_stage: None,
            first_stage_kappa: 1.0,
            lambda: None,
            kappa: 1.0,
            epsilon: None,
            eta_sq: None,
            augment: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    /// Selection artifact; defaults to `<out_dir>/selection.json`.
    pub selection: Option<PathBuf>,
    pub sigma_sq: Option<f64>,
    pub prior: PriorSpec,
    pub sampler: SamplerConfig,
    pub naive: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            selection: None,
            sigma_sq: None,
            prior: PriorSpec::default(),
            sampler: SamplerConfig::default(),
            naive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    /// Genes × samples CSV, gene labels in the first column.
    pub expression: Option<PathBuf>,
    /// Long CSV `(set, gene)`.
    pub gene_sets: Option<PathBuf>,
    pub gsva: GsvaParams,
    /// Long CSV `(sample, value)` of raw intensities.
    pub densities: Option<PathBuf>,
    pub grid_size: usize,
    pub bandwidth: BandwidthRule,
    pub variance_threshold: f64,
    pub karcher: KarcherParams,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            expression: None,
            gene_sets: None,
            gsva: GsvaParams::default(),
            densities: None,
            grid_size: DEFAULT_GRID_SIZE,
            bandwidth: BandwidthRule::default(),
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            karcher: KarcherParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub levels: Vec<f64>,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub data: DataConfig,
    pub select: SelectConfig,
    pub infer: InferConfig,
    pub simulate: SimulationConfig,
    pub features: FeaturesConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            levels: vec![0.9],
            threads: 0,
            data: DataConfig::default(),
            select: SelectConfig::default(),
            infer: InferConfig::default(),
            simulate: SimulationConfig::default(),
            features: FeaturesConfig::default(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub levels: Option<Vec<f64>>,
    pub threads: Option<usize>,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: "config".into(),
                line,
                msg: e.message().to_string(),
            }
        })
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("cannot read config: {e}"),
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                msg,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.data.y,
            &mut cfg.data.g,
            &mut cfg.data.i,
            &mut cfg.infer.selection,
            &mut cfg.features.expression,
            &mut cfg.features.gene_sets,
            &mut cfg.features.densities,
        ] {
            rebase(base, p);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(l) = &o.levels {
            self.levels = l.clone();
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_levels(&self.levels)?;
        let files = [
            ("data.y", &self.data.y),
            ("data.g", &self.data.g),
            ("data.i", &self.data.i),
            ("features.expression", &self.features.expression),
            ("features.gene_sets", &self.features.gene_sets),
            ("features.densities", &self.features.densities),
        ];
        for (key, p) in files {
            if let Some(path) = p {
                if !path.is_file() {
                    return Err(Error::invalid(format!("{key}: file {} does not exist", path.display())));
                }
            }
        }
        let positive = |key: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::invalid(format!("{key} must be positive"))),
            _ => Ok(()),
        };
        positive("select.lambda", self.select.lambda)?;
        positive("select.epsilon", self.select.epsilon)?;
        positive("select.eta_sq", self.select.eta_sq)?;
        positive("select.kappa", Some(self.select.kappa))?;
        positive("select.first_stage_kappa", Some(self.select.first_stage_kappa))?;
        positive("infer.sigma_sq", self.infer.sigma_sq)?;
        self.infer.prior.validate()?;
        self.infer.sampler.validate()?;
        if !(self.features.variance_threshold > 0.0 && self.features.variance_threshold <= 1.0) {
            return Err(Error::invalid("features.variance_threshold must lie in (0, 1]"));
        }
        if self.features.grid_size < 2 {
            return Err(Error::invalid("features.grid_size must be at least 2"));
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration in canonical JSON form. The
    /// thread count cannot change any output, so it is left out.
    pub fn sha256(&self) -> String {
        let canonical = RunConfig {
            threads: 0,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.sha256(),
            seed: self.seed,
        }
    }
}

/// Parses `"0.5,0.8,0.95"`.
pub fn parse_levels(text: &str) -> Result<Vec<f64>> {
    let levels = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("level {s:?} is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    validate_levels(&levels)?;
    Ok(levels)
}
