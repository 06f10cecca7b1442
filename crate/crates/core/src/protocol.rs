//! Long-term evaluation protocols with geometric checkpoints.
//!
//! Both runners consume a stream one instance at a time, predict each
//! instance before it is used for training, and yield a [`Checkpoint`] each
//! time the processed-instance count reaches the next threshold of the
//! schedule `n0, n0*lambda, n0*lambda^2, ...`:
//!
//! * [`run_batch`] accumulates every instance into a training store and refits
//!   the model from scratch on the whole store at each threshold. Before the
//!   first fit, predictions come from [`fallback_predict`].
//! * [`run_streaming`] is prequential test-then-train with `learn_one` on every
//!   instance; thresholds only trigger evaluation.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{to_gco2e, CarbonConfig, EnergyError, EnergyMeter, SpanKind};
use crate::instance::{fallback_predict, Instance, Prediction};
use crate::metrics::{EvalWindow, MetricsBundle, MetricsError};
use crate::model::{Model, ModelError};
use crate::scalar::Scalar;
use crate::streams::{StreamError, StreamSource};

pub const DEFAULT_WINDOW: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Batch,
    Streaming,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Batch => "batch",
            Mode::Streaming => "streaming",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n0: u64,
    pub lambda: f64,
    pub window_w: usize,
    pub max_instances: Option<u64>,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            n0: 100,
            lambda: 2.0,
            window_w: DEFAULT_WINDOW,
            max_instances: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("n0 must be at least 1")]
    ZeroN0,
    #[error("lambda must be finite and > 1 so the schedule grows, got {0}")]
    NonGrowingSchedule(f64),
    #[error("window_w must be at least 1")]
    ZeroWindow,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n0 == 0 {
            return Err(ConfigError::ZeroN0);
        }
        if !(self.lambda.is_finite() && self.lambda > 1.0) {
            return Err(ConfigError::NonGrowingSchedule(self.lambda));
        }
        if self.window_w == 0 {
            return Err(ConfigError::ZeroWindow);
        }
        Ok(())
    }

    /// Checkpoint thresholds of this configuration.
    pub fn schedule(&self) -> Schedule {
        Schedule {
            next: self.n0,
            lambda: self.lambda,
        }
    }
}

/// Next threshold after `n`: `round_half_up(lambda * n)`, forced to grow by
/// at least one instance.
pub fn next_threshold(n: u64, lambda: f64) -> u64 {
    let scaled = (lambda * n as f64 + 0.5).floor();
    let scaled = if scaled >= u64::MAX as f64 { u64::MAX } else { scaled as u64 };
    scaled.max(n.saturating_add(1))
}

/// Infinite iterator over checkpoint thresholds.
#[derive(Debug, Clone)]
pub struct Schedule {
    next: u64,
    lambda: f64,
}

impl Iterator for Schedule {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let current = self.next;
        self.next = next_threshold(current, self.lambda);
        Some(current)
    }
}

/// One yielded evaluation tuple `(t_k, e_k, P_k)` plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub k: usize,
    pub t_k: u64,
    pub train_events: u64,
    pub cumulative_joules: f64,
    pub train_joules: f64,
    pub predict_joules: f64,
    pub gco2e: f64,
    pub metrics: MetricsBundle,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTotals {
    pub instances: u64,
    pub train_events: u64,
    pub cumulative_joules: f64,
    pub train_joules: f64,
    pub predict_joules: f64,
    pub gco2e: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: Mode,
    pub model_id: String,
    pub stream_id: String,
    pub meter: String,
    pub config: ProtocolConfig,
    pub carbon: CarbonConfig,
    pub checkpoints: Vec<Checkpoint>,
    pub totals: RunTotals,
}

#[derive(Debug, Error)]
pub enum RunErrorKind {
    #[error("invalid protocol config: {0}")]
    Config(#[from] ConfigError),
    #[error("stream: {0}")]
    Stream(#[from] StreamError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("meter: {0}")]
    Energy(#[from] EnergyError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("stream schema ({stream_features} features, {stream_classes} classes) does not match model schema ({model_features}, {model_classes})")]
    SchemaMismatch {
        stream_features: usize,
        stream_classes: usize,
        model_features: usize,
        model_classes: usize,
    },
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, Error)]
#[error("run aborted after {} checkpoints at instance {}: {kind}", partial.checkpoints.len(), partial.totals.instances)]
pub struct RunError {
    pub kind: RunErrorKind,
    pub partial: Box<RunResult>,
}

struct Runner<'a, M: ?Sized> {
    meter: &'a mut M,
    carbon: CarbonConfig,
    window: EvalWindow,
    schedule: Schedule,
    threshold: u64,
    started: Instant,
    result: RunResult,
}

impl<'a, M: EnergyMeter + ?Sized> Runner<'a, M> {
    fn start<F: Scalar, S, Mo>(
        mode: Mode,
        stream: &S,
        model: &Mo,
        config: &ProtocolConfig,
        meter: &'a mut M,
        carbon: &CarbonConfig,
    ) -> Result<Self, RunError>
    where
        S: StreamSource<F> + ?Sized,
        Mo: Model<F> + ?Sized,
    {
        let result = RunResult {
            mode,
            model_id: model.id().to_string(),
            stream_id: stream.id(),
            meter: meter.describe(),
            config: config.clone(),
            carbon: carbon.clone(),
            checkpoints: Vec::new(),
            totals: RunTotals::default(),
        };
        let fail = |kind: RunErrorKind, result: &RunResult| RunError {
            kind,
            partial: Box::new(result.clone()),
        };
        if let Err(e) = config.validate() {
            return Err(fail(e.into(), &result));
        }
        let (s, m) = (stream.schema(), model.schema());
        if s.num_features() != m.num_features() || s.num_classes() != m.num_classes() {
            let kind = RunErrorKind::SchemaMismatch {
                stream_features: s.num_features(),
                stream_classes: s.num_classes(),
                model_features: m.num_features(),
                model_classes: m.num_classes(),
            };
            return Err(fail(kind, &result));
        }
        let window = EvalWindow::new(config.window_w, s.num_classes()).map_err(|e| fail(e.into(), &result))?;
        let mut schedule = config.schedule();
        let threshold = schedule.next().expect("schedule is infinite");
        Ok(Self {
            meter,
            carbon: carbon.clone(),
            window,
            schedule,
            threshold,
            started: Instant::now(),
            result,
        })
    }

    fn next<F: Scalar, S: StreamSource<F> + ?Sized>(
        &self,
        stream: &mut S,
    ) -> Option<Result<Instance<F>, StreamError>> {
        if self
            .result
            .config
            .max_instances
            .is_some_and(|cap| self.result.totals.instances >= cap)
        {
            return None;
        }
        stream.next_instance()
    }

    fn metered<T>(
        &mut self,
        kind: SpanKind,
        instances: Option<u64>,
        op: impl FnOnce() -> Result<T, ModelError>,
    ) -> Result<T, RunErrorKind> {
        self.meter.begin_span(kind, instances)?;
        let out = op();
        self.meter.end_span(kind)?;
        Ok(out?)
    }

    fn record(&mut self, y: usize, prediction: &Prediction) -> Result<(), RunErrorKind> {
        self.window.push(y, prediction.class_index)?;
        self.result.totals.instances += 1;
        Ok(())
    }

    fn refresh_totals(&mut self) {
        let split = self.meter.split();
        let totals = &mut self.result.totals;
        totals.train_joules = split.train_joules;
        totals.predict_joules = split.predict_joules;
        totals.cumulative_joules = split.total();
        totals.gco2e = to_gco2e(split.total(), &self.carbon);
        totals.wall_seconds = self.started.elapsed().as_secs_f64();
    }

    fn due(&self) -> bool {
        self.result.totals.instances == self.threshold
    }

    fn checkpoint(&mut self) {
        self.refresh_totals();
        let totals = &self.result.totals;
        let cp = Checkpoint {
            k: self.result.checkpoints.len(),
            t_k: totals.instances,
            train_events: totals.train_events,
            cumulative_joules: totals.cumulative_joules,
            train_joules: totals.train_joules,
            predict_joules: totals.predict_joules,
            gco2e: totals.gco2e,
            metrics: self.window.snapshot(),
            wall_seconds: totals.wall_seconds,
        };
        log::debug!("checkpoint k={} t={} J={:.3}", cp.k, cp.t_k, cp.cumulative_joules);
        self.result.checkpoints.push(cp);
        self.threshold = self.schedule.next().expect("schedule is infinite");
    }

    fn finish(mut self, outcome: Result<(), RunErrorKind>) -> Result<RunResult, RunError> {
        self.refresh_totals();
        match outcome {
            Ok(()) => Ok(self.result),
            Err(kind) => Err(RunError {
                kind,
                partial: Box::new(self.result),
            }),
        }
    }
}

/// Batch protocol: predict, record, store; refit from scratch on the whole
/// store whenever its size reaches the next threshold.
pub fn run_batch<F, S, Mo, Me>(
    stream: &mut S,
    model: &mut Mo,
    config: &ProtocolConfig,
    meter: &mut Me,
    carbon: &CarbonConfig,
) -> Result<RunResult, RunError>
where
    F: Scalar,
    S: StreamSource<F> + ?Sized,
    Mo: Model<F> + ?Sized,
    Me: EnergyMeter + ?Sized,
{
    let mut runner = Runner::start(Mode::Batch, stream, model, config, meter, carbon)?;
    if !model.paradigm().supports_fit() {
        let kind = RunErrorKind::Model(ModelError::Unsupported {
            model: model.id().to_string(),
            operation: "fit",
        });
        return runner.finish(Err(kind));
    }
    let mut store: Vec<Instance<F>> = Vec::new();
    let mut label_counts = vec![0u64; stream.schema().num_classes()];
    let mut fitted = false;

    let outcome = (|| -> Result<(), RunErrorKind> {
        while let Some(next) = runner.next(stream) {
            let instance = next?;
            let prediction = if fitted {
                runner.metered(SpanKind::Predict, None, || model.predict(&instance.features))?
            } else {
                fallback_predict(&label_counts)
            };
            runner.record(instance.label, &prediction)?;
            label_counts[instance.label] += 1;
            store.push(instance);

            if runner.due() {
                let n = store.len() as u64;
                runner.metered(SpanKind::Train, Some(n), || model.fit(&store))?;
                runner.result.totals.train_events += 1;
                fitted = true;
                runner.checkpoint();
            }
        }
        Ok(())
    })();
    runner.finish(outcome)
}

/// Streaming protocol: prequential test-then-train with `learn_one`.
pub fn run_streaming<F, S, Mo, Me>(
    stream: &mut S,
    model: &mut Mo,
    config: &ProtocolConfig,
    meter: &mut Me,
    carbon: &CarbonConfig,
) -> Result<RunResult, RunError>
where
    F: Scalar,
    S: StreamSource<F> + ?Sized,
    Mo: Model<F> + ?Sized,
    Me: EnergyMeter + ?Sized,
{
    let mut runner = Runner::start(Mode::Streaming, stream, model, config, meter, carbon)?;
    if !model.paradigm().supports_learn_one() {
        let kind = RunErrorKind::Model(ModelError::Unsupported {
            model: model.id().to_string(),
            operation: "learn_one",
        });
        return runner.finish(Err(kind));
    }
    let outcome = (|| -> Result<(), RunErrorKind> {
        while let Some(next) = runner.next(stream) {
            let instance = next?;
            let prediction = runner.metered(SpanKind::Predict, None, || model.predict(&instance.features))?;
            runner.record(instance.label, &prediction)?;
            runner.metered(SpanKind::Train, Some(1), || model.learn_one(&instance))?;
            runner.result.totals.train_events += 1;
            if runner.due() {
                runner.checkpoint();
            }
        }
        Ok(())
    })();
    runner.finish(outcome)
}

/// Runs either protocol.
pub fn run<F, S, Mo, Me>(
    mode: Mode,
    stream: &mut S,
    model: &mut Mo,
    config: &ProtocolConfig,
    meter: &mut Me,
    carbon: &CarbonConfig,
) -> Result<RunResult, RunError>
where
    F: Scalar,
    S: StreamSource<F> + ?Sized,
    Mo: Model<F> + ?Sized,
    Me: EnergyMeter + ?Sized,
{
    match mode {
        Mode::Batch => run_batch(stream, model, config, meter, carbon),
        Mode::Streaming => run_streaming(stream, model, config, meter, carbon),
    }
}

/// One independent cell of a sweep. Every job owns a fresh stream, model and
/// meter.
pub struct SweepJob<F: Scalar = f64> {
    pub mode: Mode,
    pub stream: Box<dyn StreamSource<F>>,
    pub model: Box<dyn Model<F>>,
    pub config: ProtocolConfig,
    pub meter: Box<dyn EnergyMeter>,
    pub carbon: CarbonConfig,
}

impl<F: Scalar> SweepJob<F> {
    fn execute(mut self) -> Result<RunResult, RunError> {
        run(
            self.mode,
            &mut self.stream,
            &mut self.model,
            &self.config,
            &mut self.meter,
            &self.carbon,
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("sweep needs at least one job")]
    Empty,
}

/// Runs every job and returns the outcomes in input order. Jobs run in
/// parallel only when every meter is deterministic; CPU-time metering needs
/// an otherwise idle process, so those sweeps run sequentially.
pub fn sweep<F: Scalar>(jobs: Vec<SweepJob<F>>) -> Result<Vec<Result<RunResult, RunError>>, SweepError> {
    if jobs.is_empty() {
        return Err(SweepError::Empty);
    }
    if jobs.iter().all(|j| j.meter.is_deterministic()) {
        Ok(jobs.into_par_iter().map(SweepJob::execute).collect())
    } else {
        Ok(jobs.into_iter().map(SweepJob::execute).collect())
    }
}
