//! AdaBoost.M1 by reweighting, over depth-limited weighted CART.

use serde::{Deserialize, Serialize};

use super::{EnsembleParams, MAX_VOTE_WEIGHT};
use crate::instance::{Instance, Prediction, Schema};
use crate::model::{Model, ModelError, Paradigm};
use crate::scalar::Scalar;
use crate::trees::{CartParams, CartTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaBoostParams {
    #[serde(flatten)]
    pub ensemble: EnsembleParams,
    pub base: CartParams,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self {
            ensemble: EnsembleParams::default(),
            base: CartParams {
                max_depth: Some(3),
                ..CartParams::default()
            },
        }
    }
}

/// `beta = err / (1 - err)` and the member vote weight `ln(1 / beta)`.
pub fn adaboost_beta(err: f64) -> (f64, f64) {
    let beta = err / (1.0 - err);
    (beta, (1.0 / beta).ln())
}

#[derive(Debug, Clone)]
pub struct AdaBoostM1<F = f64> {
    schema: Schema,
    params: AdaBoostParams,
    members: Vec<(CartTree<F>, f64)>,
    round_weight_sums: Vec<f64>,
}

impl<F: Scalar> AdaBoostM1<F> {
    pub fn new(schema: Schema, params: AdaBoostParams) -> Result<Self, ModelError> {
        params.ensemble.validate()?;
        params.base.validate()?;
        Ok(Self {
            schema,
            params,
            members: Vec::new(),
            round_weight_sums: Vec::new(),
        })
    }

    /// Fitted members with their vote weights.
    pub fn members(&self) -> &[(CartTree<F>, f64)] {
        &self.members
    }

    /// Sum of instance weights after each completed round of the last fit.
    pub fn round_weight_sums(&self) -> &[f64] {
        &self.round_weight_sums
    }
}

impl<F: Scalar> Model<F> for AdaBoostM1<F> {
    fn id(&self) -> &str {
        "adaboost_m1"
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
        for (tree, w) in &self.members {
            votes[tree.predict_class(features)] += w;
        }
        Ok(Prediction::from_votes(&votes))
    }

    fn fit(&mut self, data: &[Instance<F>]) -> Result<(), ModelError> {
        self.reset();
        if data.is_empty() {
            return Err(ModelError::EmptyData);
        }
        let n = data.len();
        let mut weights = vec![F::one() / F::of_usize(n); n];
        for _ in 0..self.params.ensemble.size {
            let tree = CartTree::fit(data, &weights, &self.schema, &self.params.base)?;
            let correct: Vec<bool> = data
                .iter()
                .map(|i| tree.predict_class(&i.features) == i.label)
                .collect();
            let err: f64 = weights
                .iter()
                .zip(&correct)
                .filter(|(_, &ok)| !ok)
                .map(|(w, _)| w.as_f64())
                .sum();
            if err >= 0.5 {
                if self.members.is_empty() {
                    let stump = CartParams {
                        max_depth: Some(0),
                        ..self.params.base.clone()
                    };
                    self.members.push((CartTree::fit(data, &weights, &self.schema, &stump)?, 1.0));
                }
                break;
            }
            if err <= 0.0 {
                self.members.push((tree, MAX_VOTE_WEIGHT));
                break;
            }
            let (beta, vote) = adaboost_beta(err);
            self.members.push((tree, vote));
            let beta = F::of(beta);
            for (w, ok) in weights.iter_mut().zip(&correct) {
                if *ok {
                    *w *= beta;
                }
            }
            let total: F = weights.iter().copied().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            self.round_weight_sums.push(weights.iter().map(|w| w.as_f64()).sum());
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.members.clear();
        self.round_weight_sums.clear();
    }
}
