//! `run` and `sweep`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use log::{info, warn};
use sustaineval_core::protocol::{self, RunErrorKind, RunResult, SweepJob};
use sustaineval_core::streams::{load_csv, waveform40, CsvOptions, StreamError, WaveformConfig};
use sustaineval_core::{cpu_time_meter, deterministic_meter, EnergyMeter, StreamSource};

use crate::config::{output_root, ConfigError, DatasetSpec, ExperimentConfig, MeterSpec, ResolvedExperiment};
use crate::report::{write_checkpoints, ErrorRecord, Manifest, ReportError, SchemaRecord, CHECKPOINTS_FILE, MANIFEST_FILE};

pub const INDEX_FILE: &str = "index.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Report(#[from] ReportError),
    #[error("{0}")]
    Runtime(String),
    #[error("{failed} of {total} sweep cells failed")]
    PartialSweep { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Report(_) | CliError::Runtime(_) => 2,
            CliError::PartialSweep { .. } => 3,
        }
    }
}

/// Where a finished (or aborted) run left its artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_id: String,
    pub dir: PathBuf,
    pub checkpoints: usize,
    pub error: Option<ErrorRecord>,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

pub fn open_stream(dataset: &DatasetSpec, seed: u64) -> Result<Box<dyn StreamSource<f64>>, StreamError> {
    match dataset {
        DatasetSpec::Waveform40 { noise_features } => Ok(Box::new(waveform40::<f64>(WaveformConfig {
            seed,
            noise_features: *noise_features,
            limit: None,
        }))),
        DatasetSpec::Csv {
            path,
            label_column,
            limit,
            shuffle,
        } => {
            let options = CsvOptions {
                label_column: label_column.clone(),
                limit: *limit,
                shuffle_seed: shuffle.then_some(seed),
            };
            load_csv::<f64>(path, &options)
        }
    }
}

pub fn build_meter(spec: &MeterSpec) -> Result<Box<dyn EnergyMeter>, ConfigError> {
    let to_config = |field: &str, e: sustaineval_core::energy::EnergyError| ConfigError::field(field, e.to_string());
    Ok(match spec {
        MeterSpec::CpuTime { watts } => Box::new(cpu_time_meter(*watts).map_err(|e| to_config("meter.watts", e))?),
        MeterSpec::Deterministic { .. } => Box::new(
            deterministic_meter(spec.cost_table().expect("deterministic"))
                .map_err(|e| to_config("meter.joules_per_train_instance", e))?,
        ),
    })
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn error_kind(kind: &RunErrorKind) -> &'static str {
    match kind {
        RunErrorKind::Config(_) => "config",
        RunErrorKind::Stream(_) => "stream",
        RunErrorKind::Model(_) => "model",
        RunErrorKind::Energy(_) => "meter",
        RunErrorKind::Metrics(_) => "metrics",
        RunErrorKind::SchemaMismatch { .. } => "schema_mismatch",
    }
}

fn base_manifest(resolved: &ResolvedExperiment, started_at: String) -> Manifest {
    Manifest {
        harness_version: env!("CARGO_PKG_VERSION").to_string(),
        run_id: resolved.run_id.clone(),
        status: "ok".into(),
        config: resolved.config.clone(),
        schema: None,
        label_mapping: None,
        model_id: None,
        stream_id: None,
        meter: None,
        started_at,
        finished_at: String::new(),
        checkpoints: 0,
        totals: None,
        error: None,
        extra: BTreeMap::new(),
    }
}

/// A run prepared up to the point of execution.
struct Prepared {
    resolved: ResolvedExperiment,
    manifest: Manifest,
    dir: PathBuf,
    job: Option<SweepJob<f64>>,
}

fn prepare(resolved: ResolvedExperiment, dir: PathBuf) -> Result<Prepared, CliError> {
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let mut manifest = base_manifest(&resolved, now());
    let cfg = &resolved.config;
    let meter = build_meter(&cfg.meter)?;
    let typed = cfg.model.typed(cfg.seed)?;
    let job = match open_stream(&cfg.dataset, cfg.seed) {
        Ok(stream) => {
            manifest.schema = Some(SchemaRecord::from(stream.schema()));
            manifest.label_mapping = stream.label_mapping().map(<[String]>::to_vec);
            match typed.build(stream.schema().clone()) {
                Ok(model) => Some(SweepJob {
                    mode: resolved.mode,
                    stream,
                    model,
                    config: resolved.protocol.clone(),
                    meter,
                    carbon: resolved.carbon.clone(),
                }),
                Err(e) => {
                    manifest.error = Some(ErrorRecord {
                        kind: "model".into(),
                        message: e.to_string(),
                    });
                    None
                }
            }
        }
        Err(e) => {
            manifest.error = Some(ErrorRecord {
                kind: "dataset".into(),
                message: e.to_string(),
            });
            None
        }
    };
    Ok(Prepared {
        resolved,
        manifest,
        dir,
        job,
    })
}

fn finish(mut prepared: Prepared, outcome: Option<Result<RunResult, protocol::RunError>>) -> Result<RunOutcome, CliError> {
    let with_wall_clock = !prepared.resolved.config.meter.is_deterministic();
    let result = match outcome {
        Some(Ok(r)) => Some(r),
        Some(Err(e)) => {
            prepared.manifest.error = Some(ErrorRecord {
                kind: error_kind(&e.kind).into(),
                message: e.kind.to_string(),
            });
            Some(*e.partial)
        }
        None => None,
    };
    let checkpoints = result.as_ref().map_or(&[][..], |r| &r.checkpoints[..]);
    write_checkpoints(&prepared.dir.join(CHECKPOINTS_FILE), &prepared.resolved.run_id, checkpoints, with_wall_clock)?;
    if let Some(r) = &result {
        prepared.manifest.record_result(r);
    }
    if let Some(err) = &prepared.manifest.error {
        warn!("run {} failed: {}", prepared.resolved.run_id, err.message);
        prepared.manifest.status = "failed".into();
    }
    prepared.manifest.finished_at = now();
    prepared.manifest.write(&prepared.dir.join(MANIFEST_FILE))?;
    Ok(RunOutcome {
        run_id: prepared.resolved.run_id,
        dir: prepared.dir,
        checkpoints: checkpoints.len(),
        error: prepared.manifest.error,
    })
}

/// Executes one experiment and writes its artifacts into `dir`. Runtime
/// failures are reported in the outcome, not as `Err`.
pub fn run_experiment(config: &ExperimentConfig, dir: &Path) -> Result<RunOutcome, CliError> {
    let resolved = config.resolve()?;
    info!("run {} -> {}", resolved.run_id, dir.display());
    let mut prepared = prepare(resolved, dir.to_path_buf())?;
    let outcome = prepared.job.take().map(|mut job| {
        protocol::run(job.mode, &mut job.stream, &mut job.model, &job.config, &mut job.meter, &job.carbon)
    });
    finish(prepared, outcome)
}

/// The `run` subcommand.
pub fn cmd_run(config_path: &Path, seed: Option<u64>, out_dir: Option<&Path>) -> Result<RunOutcome, CliError> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let dir = output_root(out_dir, &config);
    let outcome = run_experiment(&config, &dir)?;
    match &outcome.error {
        None => Ok(outcome),
        Some(e) => Err(CliError::Runtime(format!(
            "run {} failed after {} checkpoints ({}: {}); partial results in {}",
            outcome.run_id,
            outcome.checkpoints,
            e.kind,
            e.message,
            outcome.dir.display()
        ))),
    }
}

fn cell_dir_name(index: usize, cell: &ExperimentConfig) -> String {
    format!("cell-{index:03}-{}-lambda{}-n{}-seed{}", cell.model.id, cell.protocol.lambda, cell.protocol.n0, cell.seed)
}

/// Runs every grid cell and writes `<root>/<cell>/` plus `<root>/index.csv`.
pub fn run_sweep(config: &ExperimentConfig, root: &Path) -> Result<Vec<RunOutcome>, CliError> {
    let cells = config.grid_cells()?;
    std::fs::create_dir_all(root).map_err(|e| CliError::Runtime(format!("{}: {e}", root.display())))?;
    let base_name = config.name.clone();

    let mut prepared = Vec::with_capacity(cells.len());
    for (i, mut cell) in cells.into_iter().enumerate() {
        let dir_name = cell_dir_name(i, &cell);
        cell.name = Some(match &base_name {
            Some(n) => format!("{n}-{dir_name}"),
            None => dir_name.clone(),
        });
        cell.output_dir = None;
        prepared.push(prepare(cell.resolve()?, root.join(dir_name))?);
    }

    let runnable: Vec<usize> = (0..prepared.len()).filter(|&i| prepared[i].job.is_some()).collect();
    let jobs: Vec<SweepJob<f64>> = runnable.iter().map(|&i| prepared[i].job.take().expect("runnable")).collect();
    let mut results: Vec<Option<Result<RunResult, protocol::RunError>>> = (0..prepared.len()).map(|_| None).collect();
    if !jobs.is_empty() {
        let outputs = protocol::sweep(jobs).map_err(|e| CliError::Runtime(e.to_string()))?;
        for (i, out) in runnable.into_iter().zip(outputs) {
            results[i] = Some(out);
        }
    }

    let mut outcomes = Vec::with_capacity(prepared.len());
    for (p, r) in prepared.into_iter().zip(results) {
        outcomes.push(finish(p, r)?);
    }
    write_index(&root.join(INDEX_FILE), root, &outcomes, config)?;
    Ok(outcomes)
}

fn write_index(path: &Path, root: &Path, outcomes: &[RunOutcome], config: &ExperimentConfig) -> Result<(), ReportError> {
    let err = |source| ReportError::Csv {
        path: path.display().to_string(),
        source,
    };
    let cells = config.grid_cells().expect("grid validated before running");
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["cell", "run_id", "model", "mode", "lambda", "n0", "seed", "directory", "status", "checkpoints"])
        .map_err(err)?;
    for (i, (o, cell)) in outcomes.iter().zip(&cells).enumerate() {
        let mode = cell.resolve().map(|r| r.mode.to_string()).unwrap_or_default();
        let dir = o.dir.strip_prefix(root).unwrap_or(&o.dir);
        w.write_record([
            i.to_string(),
            o.run_id.clone(),
            cell.model.id.to_string(),
            mode,
            cell.protocol.lambda.to_string(),
            cell.protocol.n0.to_string(),
            cell.seed.to_string(),
            dir.display().to_string(),
            if o.succeeded() { "ok".into() } else { "failed".into() },
            o.checkpoints.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// The `sweep` subcommand. `seed` replaces the base seed; grid seeds still
/// take precedence.
pub fn cmd_sweep(config_path: &Path, seed: Option<u64>, out_dir: Option<&Path>) -> Result<Vec<RunOutcome>, CliError> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let root = output_root(out_dir, &config);
    let outcomes = run_sweep(&config, &root)?;
    let failed = outcomes.iter().filter(|o| !o.succeeded()).count();
    if failed > 0 {
        return Err(CliError::PartialSweep {
            failed,
            total: outcomes.len(),
        });
    }
    Ok(outcomes)
}
