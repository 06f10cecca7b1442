//! Random Forest: bootstrap samples, `ceil(sqrt(d))` candidate features per
//! split, unweighted majority vote.

use serde::{Deserialize, Serialize};

use super::EnsembleParams;
use crate::instance::{Instance, Prediction, Schema};
use crate::model::{Model, ModelError, Paradigm};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::trees::{CartParams, CartTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    #[serde(flatten)]
    pub ensemble: EnsembleParams,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features per split; `ceil(sqrt(d))` when `None`.
    pub feature_subsample: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            ensemble: EnsembleParams::default(),
            max_depth: None,
            min_leaf: CartParams::default().min_leaf,
            feature_subsample: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest<F = f64> {
    schema: Schema,
    params: ForestParams,
    trees: Vec<CartTree<F>>,
}

impl<F: Scalar> RandomForest<F> {
    pub fn new(schema: Schema, params: ForestParams) -> Result<Self, ModelError> {
        params.ensemble.validate()?;
        Ok(Self {
            schema,
            params,
            trees: Vec::new(),
        })
    }

    pub fn trees(&self) -> &[CartTree<F>] {
        &self.trees
    }

    fn subsample(&self) -> usize {
        self.params.feature_subsample.unwrap_or_else(|| {
            (self.schema.num_features() as f64).sqrt().ceil() as usize
        })
    }
}

impl<F: Scalar> Model<F> for RandomForest<F> {
    fn id(&self) -> &str {
        "random_forest"
    }

    fn paradigm(&self) -> Paradigm {
        Paradigm::Batch
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn predict(&self, features: &[F]) -> Result<Prediction, ModelError> {
        self.schema.check_features(features)?;
        let mut votes = vec![0.0f64; self.schema.num_classes()];
        for t in &self.trees {
            votes[t.predict_class(features)] += 1.0;
        }
        Ok(Prediction::from_votes(&votes))
    }

    fn fit(&mut self, data: &[Instance<F>]) -> Result<(), ModelError> {
        self.trees.clear();
        if data.is_empty() {
            return Err(ModelError::EmptyData);
        }
        let n = data.len();
        let weights = vec![F::one(); n];
        let mut rng = SeededRng::new(self.params.ensemble.seed);
        let mut trees = Vec::with_capacity(self.params.ensemble.size);
        for _ in 0..self.params.ensemble.size {
            let rows: Vec<usize> = if self.params.bootstrap {
                (0..n).map(|_| rng.below(n)).collect()
            } else {
                (0..n).collect()
            };
            let cart = CartParams {
                max_depth: self.params.max_depth,
                min_leaf: self.params.min_leaf,
                seed: rng.next_u64(),
                feature_subsample: Some(self.subsample()),
            };
            trees.push(CartTree::fit_rows(data, &weights, rows, &self.schema, &cart)?);
        }
        self.trees = trees;
        Ok(())
    }

    fn reset(&mut self) {
        self.trees.clear();
    }
}
