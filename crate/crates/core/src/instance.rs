//! Domain types: dataset schema, labeled instances and predictions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{argmax, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("schema needs at least one feature")]
    NoFeatures,
    #[error("schema needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("{names} feature names given for {features} features")]
    NameCount { names: usize, features: usize },
    #[error("instance has {got} features, schema expects {expected}")]
    Arity { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
}

/// Dimensions of a classification dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    num_features: usize,
    num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_names: Option<Vec<String>>,
}

impl Schema {
    pub fn new(num_features: usize, num_classes: usize) -> Result<Self, SchemaError> {
        if num_features == 0 {
            return Err(SchemaError::NoFeatures);
        }
        if num_classes < 2 {
            return Err(SchemaError::TooFewClasses(num_classes));
        }
        Ok(Self {
            num_features,
            num_classes,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self, SchemaError> {
        if names.len() != self.num_features {
            return Err(SchemaError::NameCount {
                names: names.len(),
                features: self.num_features,
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Checks arity and label range of an instance against this schema.
    pub fn check<F>(&self, instance: &Instance<F>) -> Result<(), SchemaError> {
        self.check_features(&instance.features)?;
        if instance.label >= self.num_classes {
            return Err(SchemaError::Label {
                label: instance.label,
                classes: self.num_classes,
            });
        }
        Ok(())
    }

    pub fn check_features<F>(&self, features: &[F]) -> Result<(), SchemaError> {
        if features.len() != self.num_features {
            return Err(SchemaError::Arity {
                expected: self.num_features,
                got: features.len(),
            });
        }
        Ok(())
    }
}

/// One labeled example `(x, y)` and its position in the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<F = f64> {
    pub features: Vec<F>,
    pub label: usize,
    pub seq: u64,
}

impl<F> Instance<F> {
    pub fn new(features: Vec<F>, label: usize, seq: u64) -> Self {
        Self {
            features,
            label,
            seq,
        }
    }
}

/// Model output for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub scores: Option<Vec<f64>>,
}

impl Prediction {
    pub fn class(class_index: usize) -> Self {
        Self {
            class_index,
            scores: None,
        }
    }

    /// Builds a prediction from a probability vector; the class is the
    /// lowest-index argmax.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        Self {
            class_index: argmax(&scores),
            scores: Some(scores),
        }
    }

    /// Builds a prediction from unnormalised non-negative votes. An all-zero
    /// vote vector predicts class 0 with no scores attached.
    pub fn from_votes<F: Scalar>(votes: &[F]) -> Self {
        let total: f64 = votes.iter().map(|v| v.as_f64()).sum();
        if total > 0.0 && total.is_finite() {
            Self::from_scores(votes.iter().map(|v| v.as_f64() / total).collect())
        } else {
            Self::class(0)
        }
    }
}

/// Cold-start policy: the majority class among observed labels, lowest index
/// on ties, class 0 when nothing has been observed.
pub fn fallback_predict(label_counts: &[u64]) -> Prediction {
    Prediction::class(argmax(label_counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fallback_examples() {
        assert_eq!(fallback_predict(&[0, 0, 0]).class_index, 0);
        assert_eq!(fallback_predict(&[3, 7, 3]).class_index, 1);
        assert_eq!(fallback_predict(&[5, 5, 2]).class_index, 0);
    }

    #[test]
    fn schema_rejects_degenerate_dimensions() {
        assert_eq!(Schema::new(0, 2), Err(SchemaError::NoFeatures));
        assert_eq!(Schema::new(3, 1), Err(SchemaError::TooFewClasses(1)));
        let s = Schema::new(2, 2).unwrap();
        assert!(s.clone().with_feature_names(vec!["a".into()]).is_err());
        assert!(s.with_feature_names(vec!["a".into(), "b".into()]).is_ok());
    }

    #[test]
    fn schema_checks_instances() {
        let s = Schema::new(2, 3).unwrap();
        assert!(s.check(&Instance::new(vec![0.0, 1.0], 2, 0)).is_ok());
        assert!(matches!(
            s.check(&Instance::new(vec![0.0], 0, 0)),
            Err(SchemaError::Arity { .. })
        ));
        assert!(matches!(
            s.check(&Instance::new(vec![0.0, 1.0], 3, 0)),
            Err(SchemaError::Label { .. })
        ));
    }

    #[test]
    fn scores_determine_class() {
        let p = Prediction::from_scores(vec![0.25, 0.375, 0.375]);
        assert_eq!(p.class_index, 1);
        let v = Prediction::from_votes(&[0.0f64, 2.0, 6.0]);
        assert_eq!(v.class_index, 2);
        let s = v.scores.unwrap();
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(Prediction::from_votes(&[0.0f32, 0.0]).class_index, 0);
    }
}
