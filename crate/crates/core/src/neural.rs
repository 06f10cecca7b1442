//! Fully connected ReLU network with softmax output, trained by plain SGD on
//! mean cross-entropy.
//!
//! The batch form ([`mlp_fit`]) runs minibatch epochs with early stopping on a
//! held-out validation split; the streaming form takes one SGD step per
//! instance.

use serde::{Deserialize, Serialize};

use crate::instance::{Instance, Prediction, Schema};
use crate::model::{Model, ModelError, Paradigm};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

pub const MIN_FIT_INSTANCES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            learning_rate: 1e-3,
            batch_size: 1024,
            patience: 3,
            min_delta: 1e-4,
            max_epochs: 200,
            validation_fraction: 0.1,
            seed: 1,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Invalid(m.to_string()));
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return bad("validation_fraction must be in (0, 0.5)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    inputs: usize,
    outputs: usize,
    /// Row-major `[output][input]`.
    weights: Vec<F>,
    bias: Vec<F>,
}

impl<F: Scalar> Layer<F> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![F::zero(); inputs * outputs],
            bias: vec![F::zero(); outputs],
        }
    }

    fn glorot(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs);
        for w in &mut layer.weights {
            *w = F::of((2.0 * rng.uniform() - 1.0) * bound);
        }
        layer
    }

    fn affine(&self, input: &[F]) -> Vec<F> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(input).map(|(&w, &x)| w * x).sum::<F>() + b)
            .collect()
    }
}

/// Network parameters. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpState<F = f64> {
    layers: Vec<Layer<F>>,
}

fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl<F: Scalar> MlpState<F> {
    fn dims(inputs: usize, hidden: &[usize], classes: usize) -> Vec<usize> {
        std::iter::once(inputs)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(classes))
            .collect()
    }

    pub fn zeros(inputs: usize, hidden: &[usize], classes: usize) -> Self {
        let dims = Self::dims(inputs, hidden, classes);
        Self {
            layers: dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(inputs: usize, hidden: &[usize], classes: usize, rng: &mut SeededRng) -> Self {
        let dims = Self::dims(inputs, hidden, classes);
        Self {
            layers: dims.windows(2).map(|d| Layer::glorot(d[0], d[1], rng)).collect(),
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn flat(&self) -> Vec<F> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[F]) {
        assert_eq!(values.len(), self.num_params());
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *p = it.next().expect("length checked");
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|p| p.is_finite()))
    }

    /// Activations of every layer; the last entry holds the logits.
    fn trace(&self, features: &[F]) -> Vec<Vec<F>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(features.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(acts.last().expect("non-empty"));
            if i + 1 < self.layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(F::zero()));
            }
            acts.push(z);
        }
        acts
    }

    fn probabilities(&self, features: &[F]) -> Vec<F> {
        softmax(self.trace(features).last().expect("non-empty"))
    }

    /// Mean cross-entropy over `batch`.
    pub fn loss<'a>(&self, batch: impl IntoIterator<Item = &'a Instance<F>>) -> F {
        let mut total = F::zero();
        let mut n = 0usize;
        for inst in batch {
            let p = self.probabilities(&inst.features)[inst.label];
            total -= p.max(F::min_positive_value()).ln();
            n += 1;
        }
        total / F::of_usize(n.max(1))
    }

    fn accumulate_gradient(&self, inst: &Instance<F>, grad: &mut MlpState<F>) {
        let acts = self.trace(&inst.features);
        let mut delta = softmax(acts.last().expect("non-empty"));
        delta[inst.label] -= F::one();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &acts[li];
            let g = &mut grad.layers[li];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, &x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if li == 0 {
                break;
            }
            // input of this layer is the ReLU output of the previous one
            let mut prev = vec![F::zero(); layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            for (p, &a) in prev.iter_mut().zip(input) {
                if a <= F::zero() {
                    *p = F::zero();
                }
            }
            delta = prev;
        }
    }

    /// Exact gradient of the mean cross-entropy over `batch`.
    pub fn gradient<'a>(&self, batch: impl IntoIterator<Item = &'a Instance<F>>) -> MlpState<F> {
        let mut grad = MlpState {
            layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        };
        let mut n = 0usize;
        for inst in batch {
            self.accumulate_gradient(inst, &mut grad);
            n += 1;
        }
        let scale = F::one() / F::of_usize(n.max(1));
        for l in &mut grad.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|g| *g *= scale);
        }
        grad
    }

    /// `self - learning_rate * grad`.
    pub fn stepped(&self, grad: &MlpState<F>, learning_rate: F) -> MlpState<F> {
        let mut next = self.clone();
        for (l, g) in next.layers.iter_mut().zip(&grad.layers) {
            for (p, &d) in l.weights.iter_mut().chain(l.bias.iter_mut()).zip(g.weights.iter().chain(&g.bias)) {
                *p -= learning_rate * d;
            }
        }
        next
    }
}

/// Softmax class probabilities for one feature vector.
pub fn mlp_forward<F: Scalar>(state: &MlpState<F>, features: &[F]) -> Result<Vec<F>, ModelError> {
    if features.len() != state.num_inputs() {
        return Err(ModelError::Invalid(format!(
            "expected {} features, got {}",
            state.num_inputs(),
            features.len()
        )));
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite("input feature".into()));
    }
    Ok(state.probabilities(features))
}

/// Gradient of the mean cross-entropy loss over a non-empty batch.
pub fn mlp_gradient<F: Scalar>(state: &MlpState<F>, batch: &[Instance<F>]) -> MlpState<F> {
    state.gradient(batch)
}

/// Minibatch SGD with early stopping on validation cross-entropy. Returns the
/// state with the best validation loss seen (the initial state included).
pub fn mlp_fit<F: Scalar>(data: &[Instance<F>], schema: &Schema, params: &MlpParams) -> Result<MlpState<F>, ModelError> {
    params.validate()?;
    if data.len() < MIN_FIT_INSTANCES {
        return Err(ModelError::TooFewInstances {
            needed: MIN_FIT_INSTANCES,
            got: data.len(),
        });
    }
    for inst in data {
        schema.check(inst)?;
    }
    let mut rng = SeededRng::new(params.seed);
    let mut state = MlpState::init(schema.num_features(), &params.hidden, schema.num_classes(), &mut rng);
    if params.max_epochs == 0 {
        return Ok(state);
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);
    let n_val = ((data.len() as f64 * params.validation_fraction).round() as usize).max(1);
    let (train, val) = order.split_at(data.len() - n_val);
    let mut train = train.to_vec();
    let val_loss = |s: &MlpState<F>| s.loss(val.iter().map(|&i| &data[i]));

    let lr = F::of(params.learning_rate);
    let mut best = state.clone();
    let mut best_loss = val_loss(&state);
    let mut stale = 0;
    for epoch in 0..params.max_epochs {
        rng.shuffle(&mut train);
        for chunk in train.chunks(params.batch_size) {
            let grad = state.gradient(chunk.iter().map(|&i| &data[i]));
            state = state.stepped(&grad, lr);
        }
        if !state.is_finite() {
            return Err(ModelError::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let loss = val_loss(&state);
        if loss < best_loss - F::of(params.min_delta) {
            best_loss = loss;
            best = state.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.patience {
                log::debug!("early stop after epoch {epoch}, val loss {best_loss}");
                break;
            }
        }
    }
    Ok(best)
}

/// One SGD step on a single instance. A step that would produce non-finite
/// parameters is rejected and the state left unchanged.
pub fn mlp_learn_one<F: Scalar>(state: &mut MlpState<F>, instance: &Instance<F>, params: &MlpParams) -> Result<(), ModelError> {
    let grad = state.gradient(std::iter::once(instance));
    let next = state.stepped(&grad, F::of(params.learning_rate));
    if !next.is_finite() {
        return Err(ModelError::NonFinite(format!("update for instance {}", instance.seq)));
    }
    *state = next;
    Ok(())
}

/// The MLP behind the model contract, either as a batch learner
/// (`mlp_batch`) or a streaming one (`mlp_streaming`).
#[derive(Debug, Clone)]
pub struct Mlp<F = f64> {
    schema: Schema,
    params: MlpParams,
    paradigm: Paradigm,
    state: MlpState<F>,
    skipped_updates: u64,
}

impl<F: Scalar> Mlp<F> {
    fn new(schema: Schema, params: MlpParams, paradigm: Paradigm) -> Result<Self, ModelError> {
        params.validate()?;
        let state = Self::initial_state(&schema, &params);
        Ok(Self {
            schema,
            params,
            paradigm,
            state,
            skipped_updates: 0,
        })
    }

    fn initial_state(schema: &Schema, params: &MlpParams) -> MlpState<F> {
        let mut rng = SeededRng::new(params.seed);
        MlpState::init(schema.num_features(), &params.hidden, schema.num_classes(), &mut rng)
    }

    pub fn batch(schema: Schema, params: MlpParams) -> Result<Self, ModelError> {
        Self::new(schema, params, Paradigm::Batch)
    }

    pub fn streaming(schema: Schema, params: MlpParams) -> Result<Self, ModelError> {
        Self::new(schema, params, Paradigm::Streaming)
    }

    pub fn state(&self) -> &MlpState<F> {
        &self.state
    }

    /// Streaming updates rejected for producing non-finite parameters.
    pub fn skipped_updates(&self) -> u64 {
        self.skipped_updates
    }
}

impl<F: Scalar> Model<F> for Mlp<F> {
    fn id(&self) -> &str {
        match self.paradigm {
            Paradigm::Streaming => "mlp_streaming",
            _ => "mlp_batch",
        }
    }

    fn paradigm(&self) -> Paradigm {
        self.paradigm
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn predict(&self, features: &[F]) -> Result<Prediction, ModelError> {
        self.schema.check_features(features)?;
        let probs = mlp_forward(&self.state, features)?;
        Ok(Prediction::from_scores(probs.into_iter().map(|p| p.as_f64()).collect()))
    }

    fn learn_one(&mut self, instance: &Instance<F>) -> Result<(), ModelError> {
        if !self.paradigm.supports_learn_one() {
            return Err(ModelError::Unsupported {
                model: self.id().to_string(),
                operation: "learn_one",
            });
        }
        self.schema.check(instance)?;
        if let Err(e) = mlp_learn_one(&mut self.state, instance, &self.params) {
            log::warn!("skipping SGD step: {e}");
            self.skipped_updates += 1;
        }
        Ok(())
    }

    fn fit(&mut self, data: &[Instance<F>]) -> Result<(), ModelError> {
        if !self.paradigm.supports_fit() {
            return Err(ModelError::Unsupported {
                model: self.id().to_string(),
                operation: "fit",
            });
        }
        self.state = mlp_fit(data, &self.schema, &self.params)?;
        Ok(())
    }

    fn reset(&mut self) {
        self.state = Self::initial_state(&self.schema, &self.params);
        self.skipped_updates = 0;
    }
}
