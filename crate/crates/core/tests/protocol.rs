use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use sustaineval_core::protocol::{next_threshold, RunErrorKind};
use sustaineval_core::streams::VecStream;
use sustaineval_core::*;

#[derive(Debug, Clone, PartialEq)]
enum Event {
    Predict(u64),
    Learn(u64),
    Fit(Vec<u64>),
}

/// Records every call. The instance's sequence number is carried in
/// feature 0 so predictions can be attributed.
struct Recorder {
    schema: Schema,
    paradigm: Paradigm,
    log: Arc<Mutex<Vec<Event>>>,
    fail_on_fit: Option<usize>,
    fits: usize,
}

impl Recorder {
    fn new(paradigm: Paradigm) -> (Self, Arc<Mutex<Vec<Event>>>) {
        let log = Arc::new(Mutex::new(Vec::new()));
        let model = Self {
            schema: Schema::new(1, 2).unwrap(),
            paradigm,
            log: log.clone(),
            fail_on_fit: None,
            fits: 0,
        };
        (model, log)
    }
}

impl Model<f64> for Recorder {
    fn id(&self) -> &str {
        "recorder"
    }
    fn paradigm(&self) -> Paradigm {
        self.paradigm
    }
    fn schema(&self) -> &Schema {
        &self.schema
    }
    fn predict(&self, features: &[f64]) -> Result<Prediction, ModelError> {
        self.log.lock().unwrap().push(Event::Predict(features[0] as u64));
        Ok(Prediction::class(0))
    }
    fn learn_one(&mut self, instance: &Instance<f64>) -> Result<(), ModelError> {
        self.log.lock().unwrap().push(Event::Learn(instance.seq));
        Ok(())
    }
    fn fit(&mut self, data: &[Instance<f64>]) -> Result<(), ModelError> {
        self.fits += 1;
        if self.fail_on_fit == Some(self.fits) {
            return Err(ModelError::Invalid("fit refused".into()));
        }
        self.log.lock().unwrap().push(Event::Fit(data.iter().map(|i| i.seq).collect()));
        Ok(())
    }
    fn reset(&mut self) {}
}

fn seq_stream(n: u64) -> VecStream<f64> {
    let data = (0..n).map(|i| Instance::new(vec![i as f64], (i % 3 == 0) as usize, i)).collect();
    VecStream::new(Schema::new(1, 2).unwrap(), data).unwrap()
}

fn config(n0: u64, lambda: f64) -> ProtocolConfig {
    ProtocolConfig {
        n0,
        lambda,
        ..Default::default()
    }
}

fn unit_costs(train: f64, predict: f64) -> DeterministicMeter {
    deterministic_meter(CostTable {
        joules_per_train_instance: train,
        joules_per_predict: predict,
    })
    .unwrap()
}

fn t_values(r: &RunResult) -> Vec<u64> {
    r.checkpoints.iter().map(|c| c.t_k).collect()
}

#[test]
fn both_protocols_follow_the_doubling_schedule() {
    for mode in [Mode::Batch, Mode::Streaming] {
        let mut model = MajorityBaseline::<f64>::new(Schema::new(1, 2).unwrap());
        let r = run(mode, &mut seq_stream(1000), &mut model, &config(100, 2.0), &mut unit_costs(1.0, 0.0), &CarbonConfig::default()).unwrap();
        assert_eq!(t_values(&r), [100, 200, 400, 800], "{mode}");
        assert_eq!(r.checkpoints.iter().map(|c| c.k).collect::<Vec<_>>(), [0, 1, 2, 3]);
        assert_eq!(r.totals.instances, 1000);
    }
}

#[test]
fn short_stream_has_no_checkpoints_but_totals() {
    let mut model = MajorityBaseline::<f64>::new(Schema::new(1, 2).unwrap());
    let r = run_batch(&mut seq_stream(50), &mut model, &config(100, 2.0), &mut unit_costs(1.0, 0.0), &CarbonConfig::default()).unwrap();
    assert!(r.checkpoints.is_empty());
    assert_eq!(r.totals.instances, 50);
    assert_eq!(r.totals.train_events, 0);
    assert_eq!(r.totals.cumulative_joules, 0.0);
}

#[test]
fn max_instances_caps_the_stream() {
    let mut model = MajorityBaseline::<f64>::new(Schema::new(1, 2).unwrap());
    let cfg = ProtocolConfig {
        max_instances: Some(450),
        ..config(100, 2.0)
    };
    let r = run_streaming(&mut seq_stream(1000), &mut model, &cfg, &mut unit_costs(1.0, 0.0), &CarbonConfig::default()).unwrap();
    assert_eq!(t_values(&r), [100, 200, 400]);
    assert_eq!(r.totals.instances, 450);
}

#[test]
fn streaming_predicts_before_learning() {
    let (mut model, log) = Recorder::new(Paradigm::Streaming);
    run_streaming(&mut seq_stream(10_000), &mut model, &config(100, 2.0), &mut unit_costs(1.0, 0.0), &CarbonConfig::default()).unwrap();
    let log = log.lock().unwrap();
    let expected: Vec<Event> = (0..10_000).flat_map(|i| [Event::Predict(i), Event::Learn(i)]).collect();
    assert_eq!(*log, expected);
}

#[test]
fn batch_fits_see_exact_prefixes() {
    let (mut model, log) = Recorder::new(Paradigm::Batch);
    let r = run_batch(&mut seq_stream(10_000), &mut model, &config(100, 2.0), &mut unit_costs(1.0, 0.0), &CarbonConfig::default()).unwrap();
    let log = log.lock().unwrap();
    let mut latest_fit: Option<u64> = None;
    let mut fits = Vec::new();
    for event in log.iter() {
        match event {
            Event::Fit(seqs) => {
                assert_eq!(*seqs, (0..seqs.len() as u64).collect::<Vec<_>>());
                latest_fit = Some(seqs.len() as u64);
                fits.push(seqs.len() as u64);
            }
            Event::Predict(i) => {
                let seen = latest_fit.expect("model predicted before its first fit");
                assert!(seen <= *i, "instance {i} predicted by a model fitted on {seen}");
            }
            Event::Learn(_) => panic!("batch protocol called learn_one"),
        }
    }
    assert_eq!(fits, t_values(&r));
    // instances 0..100 use the fallback policy
    assert_eq!(log.iter().filter(|e| matches!(e, Event::Predict(_))).count(), 10_000 - 100);
}

#[test]
fn batch_training_cost_is_sum_of_thresholds() {
    let mut model = MajorityBaseline::<f64>::new(Schema::new(1, 2).unwrap());
    let r = run_batch(&mut seq_stream(800), &mut model, &config(100, 2.0), &mut unit_costs(1.0, 0.0), &CarbonConfig::default()).unwrap();
    let train: Vec<f64> = r.checkpoints.iter().map(|c| c.train_joules).collect();
    assert_eq!(train, [100.0, 300.0, 700.0, 1500.0]);
    assert_eq!(r.checkpoints[3].cumulative_joules, 1500.0);
}

#[test]
fn streaming_cost_is_linear() {
    let mut model = MajorityBaseline::<f64>::new(Schema::new(1, 2).unwrap());
    let r = run_streaming(&mut seq_stream(800), &mut model, &config(100, 2.0), &mut unit_costs(1.0, 0.5), &CarbonConfig::default()).unwrap();
    let last = r.checkpoints.last().unwrap();
    assert_eq!((last.t_k, last.train_joules, last.predict_joules), (800, 800.0, 400.0));
    assert_eq!(r.totals.cumulative_joules, 1200.0);
    for c in &r.checkpoints {
        assert_eq!(c.train_joules, c.t_k as f64);
    }
}

#[test]
fn inert_learner_scores_as_constant_predictor() {
    // Recorder always predicts class 0 and never learns.
    let (mut model, _) = Recorder::new(Paradigm::Streaming);
    let cfg = ProtocolConfig {
        window_w: 300,
        ..config(300, 2.0)
    };
    let r = run_streaming(&mut seq_stream(300), &mut model, &cfg, &mut unit_costs(0.0, 0.0), &CarbonConfig::default()).unwrap();
    // labels are 1 on multiples of 3
    assert_eq!(r.checkpoints[0].metrics.accuracy, Some(200.0 / 300.0));
    assert_eq!(r.checkpoints[0].metrics.kappa, Some(0.0));
}

#[test]
fn fit_failure_keeps_earlier_checkpoints() {
    let (mut model, _) = Recorder::new(Paradigm::Batch);
    model.fail_on_fit = Some(3);
    let err = run_batch(&mut seq_stream(1000), &mut model, &config(100, 2.0), &mut unit_costs(1.0, 0.0), &CarbonConfig::default()).unwrap_err();
    assert!(matches!(err.kind, RunErrorKind::Model(ModelError::Invalid(_))));
    assert_eq!(t_values(&err.partial), [100, 200]);
    assert_eq!(err.partial.totals.instances, 400);
}

#[test]
fn wrong_paradigm_and_schema_are_rejected() {
    let (mut batch_only, _) = Recorder::new(Paradigm::Batch);
    let err = run_streaming(&mut seq_stream(10), &mut batch_only, &config(5, 2.0), &mut unit_costs(1.0, 0.0), &CarbonConfig::default()).unwrap_err();
    assert!(matches!(err.kind, RunErrorKind::Model(ModelError::Unsupported { .. })));

    let mut wide = MajorityBaseline::<f64>::new(Schema::new(3, 2).unwrap());
    let err = run_batch(&mut seq_stream(10), &mut wide, &config(5, 2.0), &mut unit_costs(1.0, 0.0), &CarbonConfig::default()).unwrap_err();
    assert!(matches!(err.kind, RunErrorKind::SchemaMismatch { .. }));

    let mut model = MajorityBaseline::<f64>::new(Schema::new(1, 2).unwrap());
    let err = run_batch(&mut seq_stream(10), &mut model, &config(5, 1.0), &mut unit_costs(1.0, 0.0), &CarbonConfig::default()).unwrap_err();
    assert!(matches!(err.kind, RunErrorKind::Config(_)));
}

fn job(lambda: f64) -> SweepJob<f64> {
    SweepJob {
        mode: Mode::Streaming,
        stream: Box::new(seq_stream(2000)),
        model: Box::new(MajorityBaseline::<f64>::new(Schema::new(1, 2).unwrap())),
        config: config(100, lambda),
        meter: Box::new(unit_costs(1.0, 0.25)),
        carbon: CarbonConfig::default(),
    }
}

#[test]
fn sweep_keeps_order_and_is_reproducible() {
    assert!(sweep::<f64>(Vec::new()).is_err());
    let lambdas = [1.5, 2.0, 4.0];
    let a = sweep(lambdas.iter().map(|&l| job(l)).collect()).unwrap();
    let b = sweep(lambdas.iter().map(|&l| job(l)).collect()).unwrap();
    let schedules: Vec<Vec<u64>> = a.iter().map(|r| t_values(r.as_ref().unwrap())).collect();
    assert_eq!(schedules[0], [100, 150, 225, 338, 507, 761, 1142, 1713]);
    assert_eq!(schedules[1], [100, 200, 400, 800, 1600]);
    assert_eq!(schedules[2], [100, 400, 1600]);
    for (x, y) in a.iter().zip(&b) {
        let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
        for (cx, cy) in x.checkpoints.iter().zip(&y.checkpoints) {
            assert_eq!((cx.t_k, cx.cumulative_joules.to_bits(), &cx.metrics), (cy.t_k, cy.cumulative_joules.to_bits(), &cy.metrics));
        }
    }
}

#[test]
fn sweep_collects_failures_without_aborting() {
    let mut jobs = vec![job(2.0), job(1.0), job(4.0)];
    jobs[1].config.lambda = 1.0;
    let out = sweep(jobs).unwrap();
    assert!(out[0].is_ok() && out[1].is_err() && out[2].is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn emitted_schedule_matches_iteration(n0 in 1u64..60, lambda in 1.01f64..3.5, len in 1u64..600, streaming: bool) {
        let mode = if streaming { Mode::Streaming } else { Mode::Batch };
        let mut model = MajorityBaseline::<f64>::new(Schema::new(1, 2).unwrap());
        let cfg = ProtocolConfig { window_w: 37, ..config(n0, lambda) };
        let r = run(mode, &mut seq_stream(len), &mut model, &cfg, &mut unit_costs(1.0, 0.1), &CarbonConfig::default()).unwrap();

        let mut expected = Vec::new();
        let mut n = n0;
        while n <= len {
            expected.push(n);
            n = next_threshold(n, lambda);
        }
        prop_assert_eq!(t_values(&r), expected);
        for pair in r.checkpoints.windows(2) {
            prop_assert!(pair[0].cumulative_joules <= pair[1].cumulative_joules);
            prop_assert!(pair[0].gco2e <= pair[1].gco2e);
        }
        for c in &r.checkpoints {
            prop_assert!(c.metrics.support <= 37);
        }
    }
}
