//! The model contract every learner implements, plus the majority baseline.

use std::marker::PhantomData;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{fallback_predict, Instance, Prediction, Schema, SchemaError};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model `{model}` does not support {operation}")]
    Unsupported {
        model: String,
        operation: &'static str,
    },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("cannot fit on an empty dataset")]
    EmptyData,
    #[error("need at least {needed} instances to fit, got {got}")]
    TooFewInstances { needed: usize, got: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("{0}")]
    Invalid(String),
}

/// Which training operations a model supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    Batch,
    Streaming,
    Both,
}

impl Paradigm {
    pub fn supports_fit(self) -> bool {
        matches!(self, Paradigm::Batch | Paradigm::Both)
    }

    pub fn supports_learn_one(self) -> bool {
        matches!(self, Paradigm::Streaming | Paradigm::Both)
    }
}

/// A classifier `x -> y` with inference and at least one training operation.
///
/// `fit` always retrains from scratch; `reset` restores the exact
/// post-construction state (same seed, same parameters). Implementations are
/// single-owner and never called concurrently.
pub trait Model<F: Scalar = f64>: Send {
    fn id(&self) -> &str;

    fn paradigm(&self) -> Paradigm;

    fn schema(&self) -> &Schema;

    fn predict(&self, features: &[F]) -> Result<Prediction, ModelError>;

    fn learn_one(&mut self, instance: &Instance<F>) -> Result<(), ModelError> {
        let _ = instance;
        Err(ModelError::Unsupported {
            model: self.id().to_string(),
            operation: "learn_one",
        })
    }

    fn fit(&mut self, data: &[Instance<F>]) -> Result<(), ModelError> {
        let _ = data;
        Err(ModelError::Unsupported {
            model: self.id().to_string(),
            operation: "fit",
        })
    }

    fn reset(&mut self);
}

impl<F: Scalar, M: Model<F> + ?Sized> Model<F> for Box<M> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn paradigm(&self) -> Paradigm {
        (**self).paradigm()
    }
    fn schema(&self) -> &Schema {
        (**self).schema()
    }
    fn predict(&self, features: &[F]) -> Result<Prediction, ModelError> {
        (**self).predict(features)
    }
    fn learn_one(&mut self, instance: &Instance<F>) -> Result<(), ModelError> {
        (**self).learn_one(instance)
    }
    fn fit(&mut self, data: &[Instance<F>]) -> Result<(), ModelError> {
        (**self).fit(data)
    }
    fn reset(&mut self) {
        (**self).reset()
    }
}

/// Predicts the most frequent label seen so far. Supports both paradigms and
/// gives every dataset a floor line.
#[derive(Debug, Clone)]
pub struct MajorityBaseline<F = f64> {
    schema: Schema,
    counts: Vec<u64>,
    _scalar: PhantomData<F>,
}

impl<F: Scalar> MajorityBaseline<F> {
    pub fn new(schema: Schema) -> Self {
        let counts = vec![0; schema.num_classes()];
        Self {
            schema,
            counts,
            _scalar: PhantomData,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

impl<F: Scalar> Model<F> for MajorityBaseline<F> {
    fn id(&self) -> &str {
        "majority_baseline"
    }

    fn paradigm(&self) -> Paradigm {
        Paradigm::Both
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn predict(&self, features: &[F]) -> Result<Prediction, ModelError> {
        self.schema.check_features(features)?;
        Ok(fallback_predict(&self.counts))
    }

    fn learn_one(&mut self, instance: &Instance<F>) -> Result<(), ModelError> {
        self.schema.check(instance)?;
        self.counts[instance.label] += 1;
        Ok(())
    }

    fn fit(&mut self, data: &[Instance<F>]) -> Result<(), ModelError> {
        if data.is_empty() {
            return Err(ModelError::EmptyData);
        }
        self.reset();
        for inst in data {
            self.schema.check(inst)?;
            self.counts[inst.label] += 1;
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
    }
}
