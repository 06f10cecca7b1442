//! Sliding-window prequential metrics over the last `w` (y, y_hat) pairs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("window capacity must be at least 1")]
    ZeroCapacity,
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
}

/// Windowed performance metrics. All values are `None` when the window is
/// empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub accuracy: Option<f64>,
    pub kappa: Option<f64>,
    pub macro_f1: Option<f64>,
    pub support: usize,
}

/// Ring buffer of (true, predicted) pairs with an incrementally maintained
/// confusion matrix (`confusion[y * classes + y_hat]`).
#[derive(Debug, Clone)]
pub struct EvalWindow {
    capacity: usize,
    classes: usize,
    entries: VecDeque<(usize, usize)>,
    confusion: Vec<u64>,
}

impl EvalWindow {
    pub fn new(capacity: usize, classes: usize) -> Result<Self, MetricsError> {
        if capacity == 0 {
            return Err(MetricsError::ZeroCapacity);
        }
        if classes < 2 {
            return Err(MetricsError::TooFewClasses(classes));
        }
        Ok(Self {
            capacity,
            classes,
            entries: VecDeque::with_capacity(capacity),
            confusion: vec![0; classes * classes],
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.iter().copied()
    }

    /// Row-major confusion counts, rows = true class.
    pub fn confusion(&self) -> &[u64] {
        &self.confusion
    }

    pub fn push(&mut self, y: usize, y_hat: usize) -> Result<(), MetricsError> {
        for index in [y, y_hat] {
            if index >= self.classes {
                return Err(MetricsError::ClassOutOfRange {
                    index,
                    classes: self.classes,
                });
            }
        }
        if self.entries.len() == self.capacity {
            let (oy, op) = self.entries.pop_front().expect("full window is non-empty");
            self.confusion[oy * self.classes + op] -= 1;
        }
        self.entries.push_back((y, y_hat));
        self.confusion[y * self.classes + y_hat] += 1;
        Ok(())
    }

    pub fn snapshot(&self) -> MetricsBundle {
        metrics_from_confusion(&self.confusion, self.classes)
    }
}

/// Accuracy, Cohen's kappa and macro-F1 from a row-major confusion matrix.
pub fn metrics_from_confusion(confusion: &[u64], classes: usize) -> MetricsBundle {
    debug_assert_eq!(confusion.len(), classes * classes);
    let support: u64 = confusion.iter().sum();
    if support == 0 {
        return MetricsBundle::default();
    }
    let n = support as f64;
    let cell = |r: usize, c: usize| confusion[r * classes + c] as f64;
    let row = |r: usize| (0..classes).map(|c| cell(r, c)).sum::<f64>();
    let col = |c: usize| (0..classes).map(|r| cell(r, c)).sum::<f64>();

    let trace: f64 = (0..classes).map(|i| cell(i, i)).sum();
    let p_o = trace / n;
    let p_e: f64 = (0..classes).map(|i| row(i) * col(i)).sum::<f64>() / (n * n);
    let kappa = if p_e == 1.0 { 0.0 } else { (p_o - p_e) / (1.0 - p_e) };

    let f1_sum: f64 = (0..classes)
        .map(|i| {
            let tp = cell(i, i);
            let predicted = col(i);
            let actual = row(i);
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if actual > 0.0 { tp / actual } else { 0.0 };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .sum();

    MetricsBundle {
        accuracy: Some(p_o),
        kappa: Some(kappa),
        macro_f1: Some(f1_sum / classes as f64),
        support: support as usize,
    }
}
