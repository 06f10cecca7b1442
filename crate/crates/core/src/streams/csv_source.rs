//! CSV ingestion for real datasets.
//!
//! The file is read twice: a first pass over the label column fixes the
//! class mapping (first-seen order) and the row count, the second pass
//! streams instances lazily in file order.

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{StreamError, StreamSource, VecStream};
use crate::instance::{Instance, Schema};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Label column selector: header name or 0-based index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("label".to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    pub limit: Option<u64>,
    /// Seed for an optional pre-shuffle; `None` keeps file order.
    pub shuffle_seed: Option<u64>,
}

pub struct CsvStream<F = f64> {
    path: PathBuf,
    schema: Schema,
    labels: Vec<String>,
    label_index: HashMap<String, usize>,
    label_col: usize,
    columns: Vec<String>,
    records: csv::StringRecordsIntoIter<File>,
    rows: u64,
    emitted: u64,
    _scalar: std::marker::PhantomData<F>,
}

fn open(path: &Path) -> Result<csv::Reader<File>, StreamError> {
    let file = File::open(path).map_err(|source| StreamError::Open {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

/// Opens a CSV file as a stream. With `shuffle_seed` set, the (possibly
/// limited) rows are loaded into memory and shuffled before streaming.
pub fn load_csv<F: Scalar>(
    path: impl AsRef<Path>,
    options: &CsvOptions,
) -> Result<Box<dyn StreamSource<F>>, StreamError> {
    let stream = CsvStream::<F>::open(path, options)?;
    match options.shuffle_seed {
        None => Ok(Box::new(stream)),
        Some(seed) => Ok(Box::new(stream.into_shuffled(seed)?)),
    }
}

impl<F: Scalar> CsvStream<F> {
    pub fn open(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Self, StreamError> {
        let path = path.as_ref();
        let mut reader = open(path)?;
        let columns: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let label_col = match &options.label_column {
            LabelColumn::Index(i) if *i < columns.len() => *i,
            LabelColumn::Index(i) => return Err(StreamError::MissingLabelColumn(i.to_string())),
            LabelColumn::Name(name) => columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| StreamError::MissingLabelColumn(name.clone()))?,
        };

        let mut labels = Vec::new();
        let mut label_index = HashMap::new();
        let mut rows = 0u64;
        for record in reader.records() {
            if options.limit.is_some_and(|l| rows >= l) {
                break;
            }
            let record = record?;
            let line = record.position().map_or(rows + 2, |p| p.line());
            if record.len() != columns.len() {
                return Err(StreamError::Arity {
                    line,
                    expected: columns.len(),
                    found: record.len(),
                });
            }
            let raw = record[label_col].trim().to_string();
            if !label_index.contains_key(&raw) {
                label_index.insert(raw.clone(), labels.len());
                labels.push(raw);
            }
            rows += 1;
        }

        let feature_names: Vec<String> = columns
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_col)
            .map(|(_, c)| c.clone())
            .collect();
        let schema = Schema::new(feature_names.len(), labels.len())?.with_feature_names(feature_names)?;

        Ok(Self {
            path: path.to_path_buf(),
            schema,
            labels,
            label_index,
            label_col,
            columns,
            records: open(path)?.into_records(),
            rows,
            emitted: 0,
            _scalar: std::marker::PhantomData,
        })
    }

    fn parse(&self, record: csv::StringRecord) -> Result<Instance<F>, StreamError> {
        let line = record.position().map_or(self.emitted + 2, |p| p.line());
        if record.len() != self.columns.len() {
            return Err(StreamError::Arity {
                line,
                expected: self.columns.len(),
                found: record.len(),
            });
        }
        let mut features = Vec::with_capacity(self.schema.num_features());
        for (col, cell) in record.iter().enumerate() {
            if col == self.label_col {
                continue;
            }
            let cell = cell.trim();
            let value: f64 = cell.parse().map_err(|_| StreamError::Parse {
                line,
                column: self.columns[col].clone(),
                value: cell.to_string(),
            })?;
            features.push(F::of(value));
        }
        let label = self.label_index[record[self.label_col].trim()];
        Ok(Instance::new(features, label, self.emitted))
    }

    fn into_shuffled(mut self, seed: u64) -> Result<VecStream<F>, StreamError> {
        let mut items = super::collect(&mut self)?;
        SeededRng::new(seed).shuffle(&mut items);
        let id = format!("{}~shuffled{seed}", self.id());
        Ok(VecStream::new(self.schema.clone(), items)?
            .with_id(id)
            .with_labels(self.labels.clone()))
    }
}

impl<F: Scalar> StreamSource<F> for CsvStream<F> {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_instance(&mut self) -> Option<Result<Instance<F>, StreamError>> {
        if self.emitted >= self.rows {
            return None;
        }
        let record = match self.records.next()? {
            Ok(r) => r,
            Err(e) => return Some(Err(e.into())),
        };
        let parsed = self.parse(record);
        self.emitted += 1;
        Some(parsed)
    }

    fn total_hint(&self) -> Option<u64> {
        Some(self.rows)
    }

    fn id(&self) -> String {
        self.path
            .file_stem()
            .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned())
    }

    fn label_mapping(&self) -> Option<&[String]> {
        Some(&self.labels)
    }
}
