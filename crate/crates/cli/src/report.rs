//! Run artifacts: `checkpoints.csv` and `manifest.json`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sustaineval_core::protocol::{Checkpoint, RunResult, RunTotals};
use sustaineval_core::Schema;

use crate::config::ExperimentConfig;

pub const CHECKPOINTS_FILE: &str = "checkpoints.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const CHECKPOINT_COLUMNS: [&str; 13] = [
    "run_id",
    "k",
    "t_k",
    "train_events",
    "cumulative_joules",
    "train_joules",
    "predict_joules",
    "gco2e",
    "accuracy",
    "kappa",
    "macro_f1",
    "support",
    "wall_seconds",
];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: String, message: String },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Real number with 9 significant digits, `%.9g` style.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{x:.*}", (8 - exp) as usize))
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(format_real).unwrap_or_default()
}

/// One CSV row per checkpoint. `wall_seconds` is left empty when
/// `with_wall_clock` is false so deterministic runs are byte-reproducible.
pub fn checkpoint_row(run_id: &str, c: &Checkpoint, with_wall_clock: bool) -> [String; 13] {
    [
        run_id.to_string(),
        c.k.to_string(),
        c.t_k.to_string(),
        c.train_events.to_string(),
        format_real(c.cumulative_joules),
        format_real(c.train_joules),
        format_real(c.predict_joules),
        format_real(c.gco2e),
        optional(c.metrics.accuracy),
        optional(c.metrics.kappa),
        optional(c.metrics.macro_f1),
        c.metrics.support.to_string(),
        if with_wall_clock {
            format_real(c.wall_seconds)
        } else {
            String::new()
        },
    ]
}

pub fn write_checkpoints(path: &Path, run_id: &str, checkpoints: &[Checkpoint], with_wall_clock: bool) -> Result<(), ReportError> {
    let err = |source| ReportError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(CHECKPOINT_COLUMNS).map_err(err)?;
    for c in checkpoints {
        w.write_record(checkpoint_row(run_id, c, with_wall_clock)).map_err(err)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A checkpoints.csv row kept as the original strings.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    fields: Vec<String>,
}

impl CheckpointRecord {
    pub fn get(&self, column: &str) -> &str {
        let i = CHECKPOINT_COLUMNS
            .iter()
            .position(|c| *c == column)
            .unwrap_or_else(|| panic!("unknown checkpoint column {column}"));
        &self.fields[i]
    }
}

/// Reads and validates a checkpoints.csv file.
pub fn read_checkpoints(path: &Path) -> Result<Vec<CheckpointRecord>, ReportError> {
    let shown = path.display().to_string();
    let err = |source| ReportError::Csv {
        path: shown.clone(),
        source,
    };
    let corrupt = |message: String| ReportError::Corrupt {
        path: shown.clone(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let header: Vec<String> = r.headers().map_err(err)?.iter().map(str::to_string).collect();
    if header != CHECKPOINT_COLUMNS {
        return Err(corrupt(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(err)?;
        let row = CheckpointRecord {
            fields: rec.iter().map(str::to_string).collect(),
        };
        let line = i + 2;
        for col in ["k", "t_k", "train_events", "support"] {
            row.get(col)
                .parse::<u64>()
                .map_err(|_| corrupt(format!("line {line}: `{col}` is not an integer")))?;
        }
        for col in ["cumulative_joules", "train_joules", "predict_joules", "gco2e"] {
            row.get(col)
                .parse::<f64>()
                .map_err(|_| corrupt(format!("line {line}: `{col}` is not a number")))?;
        }
        for col in ["accuracy", "kappa", "macro_f1", "wall_seconds"] {
            let v = row.get(col);
            if !v.is_empty() && v.parse::<f64>().is_err() {
                return Err(corrupt(format!("line {line}: `{col}` is not a number")));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaRecord {
    pub num_features: usize,
    pub num_classes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
}

impl From<&Schema> for SchemaRecord {
    fn from(s: &Schema) -> Self {
        Self {
            num_features: s.num_features(),
            num_classes: s.num_classes(),
            feature_names: s.feature_names().map(<[String]>::to_vec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub harness_version: String,
    pub run_id: String,
    pub status: String,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<SchemaRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_mapping: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stream_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meter: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub checkpoints: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub totals: Option<RunTotals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl Manifest {
    pub fn record_result(&mut self, result: &RunResult) {
        self.model_id = Some(result.model_id.clone());
        self.stream_id = Some(result.stream_id.clone());
        self.meter = Some(result.meter.clone());
        self.checkpoints = result.checkpoints.len();
        self.totals = Some(result.totals.clone());
    }

    pub fn write(&self, path: &Path) -> Result<(), ReportError> {
        let json = serde_json::to_string_pretty(self).map_err(|source| ReportError::Json {
            path: path.display().to_string(),
            source,
        })?;
        std::fs::write(path, json + "\n").map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ReportError::Json {
            path: path.display().to_string(),
            source,
        })
    }
}
