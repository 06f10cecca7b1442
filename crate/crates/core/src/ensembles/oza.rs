//! Oza-Russell online bagging and boosting over Hoeffding trees.

use serde::{Deserialize, Serialize};

use super::{poisson_draw, EnsembleParams, MAX_VOTE_WEIGHT};
use crate::instance::{Instance, Prediction, Schema};
use crate::model::{Model, ModelError, Paradigm};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::trees::{HoeffdingParams, HoeffdingTree};

fn members<F: Scalar>(
    schema: &Schema,
    base: &HoeffdingParams,
    size: usize,
) -> Result<Vec<HoeffdingTree<F>>, ModelError> {
    let tree = HoeffdingTree::new(schema.clone(), base.clone())?;
    Ok(vec![tree; size])
}

/// Online bagging: each member sees each instance `k ~ Poisson(1)` times.
#[derive(Debug, Clone)]
pub struct OzaBagging<F = f64> {
    schema: Schema,
    params: EnsembleParams,
    base: HoeffdingParams,
    poisson_mean: f64,
    members: Vec<HoeffdingTree<F>>,
    rng: SeededRng,
}

impl<F: Scalar> OzaBagging<F> {
    pub fn new(schema: Schema, params: EnsembleParams, base: HoeffdingParams) -> Result<Self, ModelError> {
        params.validate()?;
        Ok(Self {
            members: members(&schema, &base, params.size)?,
            rng: SeededRng::new(params.seed),
            schema,
            params,
            base,
            poisson_mean: 1.0,
        })
    }

    /// Overrides the Poisson resampling mean (1 in the standard algorithm).
    pub fn with_poisson_mean(mut self, mean: f64) -> Self {
        self.poisson_mean = mean;
        self
    }

    pub fn members(&self) -> &[HoeffdingTree<F>] {
        &self.members
    }

    pub fn base_params(&self) -> &HoeffdingParams {
        &self.base
    }
}

impl<F: Scalar> Model<F> for OzaBagging<F> {
    fn id(&self) -> &str {
        "oza_bagging"
    }

    fn paradigm(&self) -> Paradigm {
        Paradigm::Streaming
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn predict(&self, features: &[F]) -> Result<Prediction, ModelError> {
        self.schema.check_features(features)?;
        let mut votes = vec![0.0f64; self.schema.num_classes()];
        for m in &self.members {
            votes[m.predict(features)?.class_index] += 1.0;
        }
        Ok(Prediction::from_votes(&votes))
    }

    fn learn_one(&mut self, instance: &Instance<F>) -> Result<(), ModelError> {
        self.schema.check(instance)?;
        for m in &mut self.members {
            let k = poisson_draw(self.poisson_mean, &mut self.rng);
            for _ in 0..k {
                m.learn_one(instance)?;
            }
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.members.iter_mut().for_each(|m| m.reset());
        self.rng = SeededRng::new(self.params.seed);
    }
}

/// Correct/incorrect weight mass routed to one boosting member.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoostingMemberState {
    pub lambda_sc: f64,
    pub lambda_sw: f64,
}

/// Applies one member's outcome to its state and returns the instance weight
/// passed to the next member.
pub fn boost_update(state: &mut BoostingMemberState, lambda_d: f64, correct: bool) -> f64 {
    if correct {
        state.lambda_sc += lambda_d;
        lambda_d * (state.lambda_sc + state.lambda_sw) / (2.0 * state.lambda_sc)
    } else {
        state.lambda_sw += lambda_d;
        lambda_d * (state.lambda_sc + state.lambda_sw) / (2.0 * state.lambda_sw)
    }
}

/// `ln(lambda_sc / lambda_sw)` clamped to `[0, MAX_VOTE_WEIGHT]`; members
/// that were never right get 0, members that were never wrong the maximum.
pub fn boost_vote_weight(state: &BoostingMemberState) -> f64 {
    if state.lambda_sc <= 0.0 {
        0.0
    } else if state.lambda_sw <= 0.0 {
        MAX_VOTE_WEIGHT
    } else {
        (state.lambda_sc / state.lambda_sw).ln().clamp(0.0, MAX_VOTE_WEIGHT)
    }
}

/// Online boosting: each member trains `k ~ Poisson(lambda_d)` times and
/// rescales `lambda_d` for the next member according to its correctness.
#[derive(Debug, Clone)]
pub struct OzaBoosting<F = f64> {
    schema: Schema,
    params: EnsembleParams,
    base: HoeffdingParams,
    members: Vec<HoeffdingTree<F>>,
    states: Vec<BoostingMemberState>,
    rng: SeededRng,
    dispatched: f64,
}

impl<F: Scalar> OzaBoosting<F> {
    pub fn new(schema: Schema, params: EnsembleParams, base: HoeffdingParams) -> Result<Self, ModelError> {
        params.validate()?;
        Ok(Self {
            members: members(&schema, &base, params.size)?,
            states: vec![BoostingMemberState::default(); params.size],
            rng: SeededRng::new(params.seed),
            schema,
            params,
            base,
            dispatched: 0.0,
        })
    }

    pub fn states(&self) -> &[BoostingMemberState] {
        &self.states
    }

    pub fn base_params(&self) -> &HoeffdingParams {
        &self.base
    }

    /// Total `lambda_d` mass handed to members so far.
    pub fn dispatched_mass(&self) -> f64 {
        self.dispatched
    }
}

impl<F: Scalar> Model<F> for OzaBoosting<F> {
    fn id(&self) -> &str {
        "oza_boosting"
    }

    fn paradigm(&self) -> Paradigm {
        Paradigm::Streaming
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn predict(&self, features: &[F]) -> Result<Prediction, ModelError> {
        self.schema.check_features(features)?;
        let mut votes = vec![0.0f64; self.schema.num_classes()];
        for (m, s) in self.members.iter().zip(&self.states) {
            let w = boost_vote_weight(s);
            if w > 0.0 {
                votes[m.predict(features)?.class_index] += w;
            }
        }
        Ok(Prediction::from_votes(&votes))
    }

    fn learn_one(&mut self, instance: &Instance<F>) -> Result<(), ModelError> {
        self.schema.check(instance)?;
        let mut lambda_d = 1.0;
        for (m, s) in self.members.iter_mut().zip(&mut self.states) {
            let k = poisson_draw(lambda_d, &mut self.rng);
            for _ in 0..k {
                m.learn_one(instance)?;
            }
            let correct = m.predict(&instance.features)?.class_index == instance.label;
            self.dispatched += lambda_d;
            lambda_d = boost_update(s, lambda_d, correct);
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.members.iter_mut().for_each(|m| m.reset());
        self.states.iter_mut().for_each(|s| *s = BoostingMemberState::default());
        self.rng = SeededRng::new(self.params.seed);
        self.dispatched = 0.0;
    }
}
