//! Ensembles paired batch/streaming: Random Forest with Oza online bagging,
//! AdaBoost.M1 with Oza online boosting.

mod adaboost;
mod forest;
mod oza;

pub use adaboost::{adaboost_beta, AdaBoostM1, AdaBoostParams};
pub use forest::{ForestParams, RandomForest};
pub use oza::{boost_update, boost_vote_weight, BoostingMemberState, OzaBagging, OzaBoosting};

use serde::{Deserialize, Serialize};

use crate::model::ModelError;
use crate::rng::SeededRng;

/// Upper clamp on any member vote weight.
pub const MAX_VOTE_WEIGHT: f64 = 10.0;

/// Shared by the batch and streaming variant of each pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleParams {
    pub size: usize,
    pub seed: u64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self { size: 10, seed: 1 }
    }
}

impl EnsembleParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.size == 0 {
            return Err(ModelError::Invalid("ensemble size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Poisson(mean) sample by inverse transform over the pinned generator.
pub fn poisson_draw(mean: f64, rng: &mut SeededRng) -> u64 {
    rng.poisson(mean)
}
