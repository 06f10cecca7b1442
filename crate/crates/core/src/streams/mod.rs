//! Seedable instance sources: CSV ingestion and the Waveform-40 generator.

mod csv_source;
mod waveform;

pub use csv_source::{load_csv, CsvOptions, CsvStream, LabelColumn};
pub use waveform::{class_mean, waveform40, WaveformConfig, WaveformStream, BASE_WAVES, WAVE_LEN};

use thiserror::Error;

use crate::instance::{Instance, Schema, SchemaError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("cannot open `{path}`: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: expected {expected} cells, found {found}")]
    Arity {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("take count must be at least 1")]
    EmptyTake,
}

/// A single-consumer source of labeled instances. `seq` values are
/// consecutive from 0 and a given configuration always replays the same
/// sequence.
pub trait StreamSource<F: Scalar = f64>: Send {
    fn schema(&self) -> &Schema;

    /// Next instance, or `None` at end of stream.
    fn next_instance(&mut self) -> Option<Result<Instance<F>, StreamError>>;

    /// Expected total length, when known.
    fn total_hint(&self) -> Option<u64> {
        None
    }

    /// Short human-readable identifier used in reports.
    fn id(&self) -> String;

    /// Raw label values in class-index order, for sources that map labels.
    fn label_mapping(&self) -> Option<&[String]> {
        None
    }
}

impl<F: Scalar, S: StreamSource<F> + ?Sized> StreamSource<F> for Box<S> {
    fn schema(&self) -> &Schema {
        (**self).schema()
    }
    fn next_instance(&mut self) -> Option<Result<Instance<F>, StreamError>> {
        (**self).next_instance()
    }
    fn total_hint(&self) -> Option<u64> {
        (**self).total_hint()
    }
    fn id(&self) -> String {
        (**self).id()
    }
    fn label_mapping(&self) -> Option<&[String]> {
        (**self).label_mapping()
    }
}

/// Caps a source at `count` instances.
pub struct Take<S> {
    inner: S,
    remaining: u64,
    count: u64,
}

pub fn take<S>(source: S, count: u64) -> Result<Take<S>, StreamError> {
    if count == 0 {
        return Err(StreamError::EmptyTake);
    }
    Ok(Take {
        inner: source,
        remaining: count,
        count,
    })
}

impl<F: Scalar, S: StreamSource<F>> StreamSource<F> for Take<S> {
    fn schema(&self) -> &Schema {
        self.inner.schema()
    }

    fn next_instance(&mut self) -> Option<Result<Instance<F>, StreamError>> {
        if self.remaining == 0 {
            return None;
        }
        let next = self.inner.next_instance();
        if next.is_some() {
            self.remaining -= 1;
        }
        next
    }

    fn total_hint(&self) -> Option<u64> {
        Some(self.inner.total_hint().map_or(self.count, |t| t.min(self.count)))
    }

    fn id(&self) -> String {
        format!("{}[..{}]", self.inner.id(), self.count)
    }

    fn label_mapping(&self) -> Option<&[String]> {
        self.inner.label_mapping()
    }
}

/// In-memory stream over pre-built instances; `seq` is rewritten to the
/// position in the vector.
pub struct VecStream<F = f64> {
    schema: Schema,
    items: std::vec::IntoIter<Instance<F>>,
    len: u64,
    id: String,
    labels: Option<Vec<String>>,
}

impl<F: Scalar> VecStream<F> {
    pub fn new(schema: Schema, instances: Vec<Instance<F>>) -> Result<Self, StreamError> {
        let mut instances = instances;
        for (i, inst) in instances.iter_mut().enumerate() {
            schema.check(inst)?;
            inst.seq = i as u64;
        }
        Ok(Self {
            schema,
            len: instances.len() as u64,
            items: instances.into_iter(),
            id: "memory".to_string(),
            labels: None,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub(crate) fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = Some(labels);
        self
    }
}

impl<F: Scalar> StreamSource<F> for VecStream<F> {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_instance(&mut self) -> Option<Result<Instance<F>, StreamError>> {
        self.items.next().map(Ok)
    }

    fn total_hint(&self) -> Option<u64> {
        Some(self.len)
    }

    fn id(&self) -> String {
        self.id.clone()
    }

    fn label_mapping(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }
}

/// Drains a source into memory, stopping at the first error.
pub fn collect<F: Scalar, S: StreamSource<F> + ?Sized>(
    source: &mut S,
) -> Result<Vec<Instance<F>>, StreamError> {
    let mut out = Vec::new();
    while let Some(next) = source.next_instance() {
        out.push(next?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn take_truncates_and_keeps_seq() {
        let src = waveform40::<f64>(WaveformConfig::default());
        let mut t = take(src, 100).unwrap();
        let all = collect(&mut t).unwrap();
        assert_eq!(all.len(), 100);
        assert_eq!(all.last().unwrap().seq, 99);
    }

    #[test]
    fn take_over_shorter_source() {
        let schema = Schema::new(1, 2).unwrap();
        let items = (0..3).map(|i| Instance::new(vec![i as f64], i % 2, 0)).collect();
        let mut t = take(VecStream::new(schema, items).unwrap(), 10).unwrap();
        assert_eq!(t.total_hint(), Some(3));
        assert_eq!(collect(&mut t).unwrap().len(), 3);
    }

    #[test]
    fn take_zero_is_rejected() {
        assert!(matches!(
            take(waveform40::<f32>(WaveformConfig::default()), 0),
            Err(StreamError::EmptyTake)
        ));
    }

    #[test]
    fn vec_stream_renumbers() {
        let schema = Schema::new(1, 2).unwrap();
        let items = vec![Instance::new(vec![0.0], 1, 42), Instance::new(vec![1.0], 0, 7)];
        let got = collect(&mut VecStream::new(schema, items).unwrap()).unwrap();
        assert_eq!(got.iter().map(|i| i.seq).collect::<Vec<_>>(), vec![0, 1]);
    }
}
