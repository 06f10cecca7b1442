//! Experiment configuration files.
//!
//! A config is a TOML document with the sections `dataset`, `model`,
//! `protocol`, `meter`, `carbon` and, for sweeps, `grid`. Loading resolves
//! every default so the result can be echoed into a manifest and replayed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sustaineval_core::protocol::{Mode, ProtocolConfig};
use sustaineval_core::streams::LabelColumn;
use sustaineval_core::{CarbonConfig, CostTable};

use crate::models::{ModelId, ModelSpec};

pub const DEFAULT_SEED: u64 = 1;
/// Instance cap applied to the synthetic generator when none is configured.
pub const DEFAULT_WAVEFORM_INSTANCES: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source_path: Option<PathBuf>,
    pub field: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            source_path: None,
            field: Some(field.into()),
            line: None,
            message: message.into(),
        }
    }

    fn locate(mut self, path: Option<&Path>, source: Option<&str>) -> Self {
        if self.source_path.is_none() {
            self.source_path = path.map(Path::to_path_buf);
        }
        if self.line.is_none() {
            if let (Some(src), Some(field)) = (source, &self.field) {
                self.line = line_of(src, field);
            }
        }
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.source_path {
            write!(f, "{}", p.display())?;
            if let Some(line) = self.line {
                write!(f, ":{line}")?;
            }
            write!(f, ": ")?;
        } else if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "{field}: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of `section.key` (or a bare top-level `key`) in a TOML
/// source, found by scanning table headers.
fn line_of(source: &str, field: &str) -> Option<usize> {
    let (section, key) = match field.rsplit_once('.') {
        Some((s, k)) => (s, k),
        None => ("", field),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            if current == section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Waveform40 {
        #[serde(default = "default_noise_features")]
        noise_features: usize,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: LabelColumn,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<u64>,
        /// Shuffle rows with the experiment seed before streaming.
        #[serde(default)]
        shuffle: bool,
    },
}

fn default_noise_features() -> usize {
    19
}

impl DatasetSpec {
    pub fn label(&self) -> String {
        match self {
            DatasetSpec::Waveform40 { .. } => "waveform40".to_string(),
            DatasetSpec::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSpec {
    /// Inferred from the model when it supports only one protocol.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub n0: u64,
    pub lambda: f64,
    pub window_w: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_instances: Option<u64>,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        Self {
            mode: None,
            n0: p.n0,
            lambda: p.lambda,
            window_w: p.window_w,
            max_instances: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeterSpec {
    CpuTime {
        #[serde(default = "default_watts")]
        watts: f64,
    },
    Deterministic {
        joules_per_train_instance: f64,
        #[serde(default)]
        joules_per_predict: f64,
    },
}

fn default_watts() -> f64 {
    sustaineval_core::energy::DEFAULT_POWER_WATTS
}

impl Default for MeterSpec {
    fn default() -> Self {
        MeterSpec::CpuTime { watts: default_watts() }
    }
}

impl MeterSpec {
    pub fn is_deterministic(&self) -> bool {
        matches!(self, MeterSpec::Deterministic { .. })
    }

    pub fn cost_table(&self) -> Option<CostTable> {
        match *self {
            MeterSpec::Deterministic {
                joules_per_train_instance,
                joules_per_predict,
            } => Some(CostTable {
                joules_per_train_instance,
                joules_per_predict,
            }),
            MeterSpec::CpuTime { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarbonSpec {
    #[serde(alias = "intensity")]
    pub intensity_g_per_kwh: f64,
    #[serde(alias = "region_label")]
    pub region: String,
}

impl Default for CarbonSpec {
    fn default() -> Self {
        let c = CarbonConfig::default();
        Self {
            intensity_g_per_kwh: c.intensity_g_per_kwh,
            region: c.region_label,
        }
    }
}

/// Parameter grid for `sweep`. Empty axes fall back to the base config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub model: Vec<ModelId>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub n0: Vec<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seed: Vec<u64>,
    /// Parameter overrides for grid models other than `model.id`.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub model_params: BTreeMap<ModelId, toml::Table>,
}

impl GridSpec {
    pub fn is_empty(&self) -> bool {
        self.model.is_empty() && self.lambda.is_empty() && self.n0.is_empty() && self.seed.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub meter: MeterSpec,
    #[serde(default)]
    pub carbon: CarbonSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// A config whose every field has been validated and defaulted.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub run_id: String,
    pub mode: Mode,
    pub protocol: ProtocolConfig,
    pub carbon: CarbonConfig,
}

impl ExperimentConfig {
    pub fn from_toml(source: &str) -> Result<Self, ConfigError> {
        toml::from_str(source).map_err(|e| {
            let line = e.span().map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1);
            ConfigError {
                source_path: None,
                field: None,
                line,
                message: e.message().to_string(),
            }
        })
    }

    /// Reads a TOML config, or the `config` object of a run manifest when
    /// the file has a `.json` extension.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source_path: Some(path.to_path_buf()),
            field: None,
            line: None,
            message: e.to_string(),
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str::<serde_json::Value>(&source)
                .and_then(|v| serde_json::from_value(v.get("config").cloned().unwrap_or(v)))
                .map_err(|e| ConfigError {
                    source_path: None,
                    field: None,
                    line: Some(e.line()),
                    message: e.to_string(),
                })
        } else {
            Self::from_toml(&source)
        };
        let mut config = parsed.map_err(|e| e.locate(Some(path), None))?;
        if let DatasetSpec::Csv { path: data, .. } = &mut config.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        config
            .check()
            .map_err(|e| e.locate(Some(path), Some(&source)))?;
        Ok(config)
    }

    /// Structural validation independent of the selected grid cell.
    pub fn check(&self) -> Result<(), ConfigError> {
        self.resolve().map(|_| ())?;
        if let Some(grid) = &self.grid {
            if grid.lambda.iter().any(|&l| !(l > 1.0 && l.is_finite())) {
                return Err(ConfigError::field("grid.lambda", "every lambda must be a finite value > 1"));
            }
            if grid.n0.contains(&0) {
                return Err(ConfigError::field("grid.n0", "every n0 must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<ResolvedExperiment, ConfigError> {
        let mut config = self.clone();
        config.model = config.model.resolved(config.seed)?;
        let mode = match (config.protocol.mode, config.model.id.paradigm()) {
            (Some(mode), paradigm) => {
                let ok = match mode {
                    Mode::Batch => paradigm.supports_fit(),
                    Mode::Streaming => paradigm.supports_learn_one(),
                };
                if !ok {
                    return Err(ConfigError::field(
                        "protocol.mode",
                        format!("model `{}` cannot run in {mode} mode", config.model.id),
                    ));
                }
                mode
            }
            (None, p) if p.supports_fit() && !p.supports_learn_one() => Mode::Batch,
            (None, p) if p.supports_learn_one() && !p.supports_fit() => Mode::Streaming,
            (None, _) => {
                return Err(ConfigError::field(
                    "protocol.mode",
                    format!("required for model `{}` (batch or streaming)", config.model.id),
                ))
            }
        };
        config.protocol.mode = Some(mode);
        if config.protocol.max_instances.is_none() && matches!(config.dataset, DatasetSpec::Waveform40 { .. }) {
            config.protocol.max_instances = Some(DEFAULT_WAVEFORM_INSTANCES);
        }
        if config.protocol.max_instances == Some(0) {
            return Err(ConfigError::field("protocol.max_instances", "must be at least 1"));
        }

        let protocol = ProtocolConfig {
            n0: config.protocol.n0,
            lambda: config.protocol.lambda,
            window_w: config.protocol.window_w,
            max_instances: config.protocol.max_instances,
            seed: config.seed,
        };
        protocol.validate().map_err(|e| {
            let field = match e {
                sustaineval_core::protocol::ConfigError::ZeroN0 => "protocol.n0",
                sustaineval_core::protocol::ConfigError::NonGrowingSchedule(_) => "protocol.lambda",
                sustaineval_core::protocol::ConfigError::ZeroWindow => "protocol.window_w",
            };
            ConfigError::field(field, e.to_string())
        })?;

        let carbon = CarbonConfig::new(config.carbon.intensity_g_per_kwh, config.carbon.region.clone())
            .map_err(|e| ConfigError::field("carbon.intensity_g_per_kwh", e.to_string()))?;
        match config.meter {
            MeterSpec::CpuTime { watts } if !(watts > 0.0 && watts.is_finite()) => {
                return Err(ConfigError::field("meter.watts", "must be a finite value > 0"));
            }
            MeterSpec::Deterministic { .. } => {
                let table = config.meter.cost_table().expect("deterministic");
                if let Err(e) = table.validate() {
                    return Err(ConfigError::field("meter.joules_per_train_instance", e.to_string()));
                }
            }
            _ => {}
        }
        if let DatasetSpec::Csv { limit: Some(0), .. } = config.dataset {
            return Err(ConfigError::field("dataset.limit", "must be at least 1"));
        }

        let run_id = config.name.clone().unwrap_or_else(|| {
            format!("{}-{}-{}-seed{}", config.dataset.label(), config.model.id, mode, config.seed)
        });
        Ok(ResolvedExperiment {
            config,
            run_id,
            mode,
            protocol,
            carbon,
        })
    }

    /// Grid cells in deterministic order: model, then lambda, then n0, then
    /// seed. Each cell is a standalone config without a grid.
    pub fn grid_cells(&self) -> Result<Vec<ExperimentConfig>, ConfigError> {
        let grid = match &self.grid {
            Some(g) if !g.is_empty() => g,
            _ => return Err(ConfigError::field("grid", "sweep needs a non-empty [grid] section")),
        };
        let models = if grid.model.is_empty() {
            vec![self.model.id]
        } else {
            grid.model.clone()
        };
        let lambdas = if grid.lambda.is_empty() { vec![self.protocol.lambda] } else { grid.lambda.clone() };
        let n0s = if grid.n0.is_empty() { vec![self.protocol.n0] } else { grid.n0.clone() };
        let seeds = if grid.seed.is_empty() { vec![self.seed] } else { grid.seed.clone() };

        let mut cells = Vec::new();
        for &model in &models {
            for &lambda in &lambdas {
                for &n0 in &n0s {
                    for &seed in &seeds {
                        let mut cell = self.clone();
                        cell.grid = None;
                        cell.seed = seed;
                        cell.protocol.lambda = lambda;
                        cell.protocol.n0 = n0;
                        if model != self.model.id {
                            cell.model = ModelSpec {
                                id: model,
                                params: grid.model_params.get(&model).cloned().unwrap_or_default(),
                            };
                        }
                        if let Some(mode) = cell.protocol.mode {
                            let p = model.paradigm();
                            let fits = match mode {
                                Mode::Batch => p.supports_fit(),
                                Mode::Streaming => p.supports_learn_one(),
                            };
                            if !fits {
                                cell.protocol.mode = None;
                            }
                        }
                        cells.push(cell);
                    }
                }
            }
        }
        for cell in &cells {
            cell.resolve()?;
        }
        Ok(cells)
    }
}

/// Output root: explicit override, then the config, then the environment,
/// then `results`.
pub fn output_root(override_dir: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    override_dir
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(crate::OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}
