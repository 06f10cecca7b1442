//! Span-based energy accounting and conversion to gCO2e.
//!
//! Only train and predict spans are metered. Spans may nest but energy is
//! attributed to the outermost open span only, so nested spans never double
//! count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JOULES_PER_KWH: f64 = 3.6e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("end_span({0:?}) without a matching begin_span")]
    Unbalanced(SpanKind),
    #[error("end_span({got:?}) closes an open {open:?} span")]
    Mismatched { open: SpanKind, got: SpanKind },
    #[error("train span needs an instance count for the deterministic meter")]
    MissingInstanceCount,
    #[error("power must be finite and positive, got {0}")]
    InvalidPower(f64),
    #[error("cost table entries must be finite and non-negative")]
    InvalidCostTable,
    #[error("carbon intensity must be finite and positive, got {0}")]
    InvalidIntensity(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    Train,
    Predict,
}

/// Cumulative joules split by span kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergySplit {
    pub train_joules: f64,
    pub predict_joules: f64,
}

impl EnergySplit {
    pub fn total(&self) -> f64 {
        self.train_joules + self.predict_joules
    }

    fn add(&mut self, kind: SpanKind, joules: f64) {
        match kind {
            SpanKind::Train => self.train_joules += joules,
            SpanKind::Predict => self.predict_joules += joules,
        }
    }
}

/// One closed outermost span, kept when a meter records its span log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub kind: SpanKind,
    pub instances: Option<u64>,
    pub joules: f64,
}

pub trait EnergyMeter: Send {
    /// Opens a span. `instances` is the number of instances processed inside
    /// the span (required for train spans by the deterministic meter).
    fn begin_span(&mut self, kind: SpanKind, instances: Option<u64>) -> Result<(), EnergyError>;

    fn end_span(&mut self, kind: SpanKind) -> Result<(), EnergyError>;

    fn split(&self) -> EnergySplit;

    /// Cumulative joules; never decreases.
    fn read(&self) -> f64 {
        self.split().total()
    }

    /// True when readings are hardware-independent and bit-exact.
    fn is_deterministic(&self) -> bool;

    fn describe(&self) -> String;
}

impl<M: EnergyMeter + ?Sized> EnergyMeter for Box<M> {
    fn begin_span(&mut self, kind: SpanKind, instances: Option<u64>) -> Result<(), EnergyError> {
        (**self).begin_span(kind, instances)
    }
    fn end_span(&mut self, kind: SpanKind) -> Result<(), EnergyError> {
        (**self).end_span(kind)
    }
    fn split(&self) -> EnergySplit {
        (**self).split()
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenSpan<T> {
    kind: SpanKind,
    instances: Option<u64>,
    start: T,
}

/// Open-span bookkeeping shared by the meters.
#[derive(Debug, Clone, Default)]
struct SpanStack<T> {
    open: Vec<OpenSpan<T>>,
}

impl<T: Copy> SpanStack<T> {
    fn begin(&mut self, kind: SpanKind, instances: Option<u64>, start: T) -> bool {
        self.open.push(OpenSpan {
            kind,
            instances,
            start,
        });
        self.open.len() == 1
    }

    /// Pops the innermost span; returns it when it was the outermost one.
    fn end(&mut self, kind: SpanKind) -> Result<Option<OpenSpan<T>>, EnergyError> {
        let top = self.open.last().ok_or(EnergyError::Unbalanced(kind))?;
        if top.kind != kind {
            return Err(EnergyError::Mismatched { open: top.kind, got: kind });
        }
        let span = self.open.pop().expect("checked non-empty");
        Ok(self.open.is_empty().then_some(span))
    }
}

/// Source of process CPU time in seconds.
pub trait CpuClock: Send {
    fn cpu_seconds(&self) -> f64;
}

/// `CLOCK_PROCESS_CPUTIME_ID`: CPU time consumed by all threads of the process.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProcessCpuClock;

impl CpuClock for ProcessCpuClock {
    fn cpu_seconds(&self) -> f64 {
        let mut ts = libc::timespec {
            tv_sec: 0,
            tv_nsec: 0,
        };
        // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
        let rc = unsafe { libc::clock_gettime(libc::CLOCK_PROCESS_CPUTIME_ID, &mut ts) };
        assert_eq!(rc, 0, "clock_gettime(CLOCK_PROCESS_CPUTIME_ID) failed");
        ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
    }
}

pub const DEFAULT_POWER_WATTS: f64 = 45.0;

/// Energy = CPU seconds spent inside spans x constant power draw.
pub struct CpuTimeMeter<C = ProcessCpuClock> {
    clock: C,
    watts: f64,
    stack: SpanStack<f64>,
    totals: EnergySplit,
    log: Option<Vec<SpanRecord>>,
}

pub fn cpu_time_meter(power_watts: f64) -> Result<CpuTimeMeter, EnergyError> {
    CpuTimeMeter::with_clock(ProcessCpuClock, power_watts)
}

impl<C: CpuClock> CpuTimeMeter<C> {
    pub fn with_clock(clock: C, power_watts: f64) -> Result<Self, EnergyError> {
        if !(power_watts.is_finite() && power_watts > 0.0) {
            return Err(EnergyError::InvalidPower(power_watts));
        }
        Ok(Self {
            clock,
            watts: power_watts,
            stack: SpanStack::default(),
            totals: EnergySplit::default(),
            log: None,
        })
    }

    /// Keeps a record of every closed outermost span.
    pub fn with_span_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn span_log(&self) -> &[SpanRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn power_watts(&self) -> f64 {
        self.watts
    }
}

impl<C: CpuClock> EnergyMeter for CpuTimeMeter<C> {
    fn begin_span(&mut self, kind: SpanKind, instances: Option<u64>) -> Result<(), EnergyError> {
        let now = if self.stack.open.is_empty() {
            self.clock.cpu_seconds()
        } else {
            0.0
        };
        self.stack.begin(kind, instances, now);
        Ok(())
    }

    fn end_span(&mut self, kind: SpanKind) -> Result<(), EnergyError> {
        if let Some(span) = self.stack.end(kind)? {
            let elapsed = (self.clock.cpu_seconds() - span.start).max(0.0);
            let joules = elapsed * self.watts;
            self.totals.add(kind, joules);
            if let Some(log) = &mut self.log {
                log.push(SpanRecord {
                    kind,
                    instances: span.instances,
                    joules,
                });
            }
        }
        Ok(())
    }

    fn split(&self) -> EnergySplit {
        self.totals
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        format!("cpu_time({} W)", self.watts)
    }
}

/// Fixed per-operation energy costs for the deterministic meter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostTable {
    pub joules_per_train_instance: f64,
    pub joules_per_predict: f64,
}

impl CostTable {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.joules_per_train_instance) && ok(self.joules_per_predict) {
            Ok(())
        } else {
            Err(EnergyError::InvalidCostTable)
        }
    }
}

/// Hardware-independent meter: train spans cost `m x joules_per_train_instance`
/// for `m` instances, predict spans cost `joules_per_predict` each.
#[derive(Debug, Clone)]
pub struct DeterministicMeter {
    table: CostTable,
    stack: SpanStack<()>,
    totals: EnergySplit,
}

pub fn deterministic_meter(table: CostTable) -> Result<DeterministicMeter, EnergyError> {
    table.validate()?;
    Ok(DeterministicMeter {
        table,
        stack: SpanStack::default(),
        totals: EnergySplit::default(),
    })
}

impl DeterministicMeter {
    pub fn table(&self) -> CostTable {
        self.table
    }
}

impl EnergyMeter for DeterministicMeter {
    fn begin_span(&mut self, kind: SpanKind, instances: Option<u64>) -> Result<(), EnergyError> {
        if kind == SpanKind::Train && instances.is_none() {
            return Err(EnergyError::MissingInstanceCount);
        }
        self.stack.begin(kind, instances, ());
        Ok(())
    }

    fn end_span(&mut self, kind: SpanKind) -> Result<(), EnergyError> {
        if let Some(span) = self.stack.end(kind)? {
            let joules = match kind {
                SpanKind::Train => {
                    span.instances.unwrap_or(0) as f64 * self.table.joules_per_train_instance
                }
                SpanKind::Predict => self.table.joules_per_predict,
            };
            self.totals.add(kind, joules);
        }
        Ok(())
    }

    fn split(&self) -> EnergySplit {
        self.totals
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!(
            "deterministic(train {} J/inst, predict {} J)",
            self.table.joules_per_train_instance, self.table.joules_per_predict
        )
    }
}

/// Grid carbon intensity used to convert energy into emissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonConfig {
    pub intensity_g_per_kwh: f64,
    pub region_label: String,
}

impl CarbonConfig {
    pub fn new(intensity_g_per_kwh: f64, region_label: impl Into<String>) -> Result<Self, EnergyError> {
        if !(intensity_g_per_kwh.is_finite() && intensity_g_per_kwh > 0.0) {
            return Err(EnergyError::InvalidIntensity(intensity_g_per_kwh));
        }
        Ok(Self {
            intensity_g_per_kwh,
            region_label: region_label.into(),
        })
    }
}

impl Default for CarbonConfig {
    fn default() -> Self {
        Self {
            intensity_g_per_kwh: 190.0,
            region_label: "ES".to_string(),
        }
    }
}

/// Grams of CO2-equivalent for `joules` at the configured intensity.
pub fn to_gco2e(joules: f64, carbon: &CarbonConfig) -> f64 {
    joules / JOULES_PER_KWH * carbon.intensity_g_per_kwh
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::Arc;

    /// Clock advanced manually by the test, in milliseconds.
    #[derive(Clone, Default)]
    struct FakeClock(Arc<AtomicU64>);

    impl FakeClock {
        fn advance(&self, secs: f64) {
            self.0.fetch_add((secs * 1000.0) as u64, Ordering::SeqCst);
        }
    }

    impl CpuClock for FakeClock {
        fn cpu_seconds(&self) -> f64 {
            self.0.load(Ordering::SeqCst) as f64 / 1000.0
        }
    }

    #[test]
    fn cpu_meter_power_times_seconds() {
        let clock = FakeClock::default();
        let mut m = CpuTimeMeter::with_clock(clock.clone(), 50.0).unwrap();
        m.begin_span(SpanKind::Train, Some(1)).unwrap();
        clock.advance(2.0);
        m.end_span(SpanKind::Train).unwrap();
        assert_eq!(m.read(), 100.0);
    }

    #[test]
    fn cpu_meter_zero_span_and_additivity() {
        let clock = FakeClock::default();
        let mut m = CpuTimeMeter::with_clock(clock.clone(), 45.0).unwrap().with_span_log();
        m.begin_span(SpanKind::Predict, None).unwrap();
        m.end_span(SpanKind::Predict).unwrap();
        assert_eq!(m.read(), 0.0);
        for _ in 0..2 {
            m.begin_span(SpanKind::Train, Some(1)).unwrap();
            clock.advance(1.0);
            m.end_span(SpanKind::Train).unwrap();
        }
        // time outside spans is not metered
        clock.advance(5.0);
        assert_eq!(m.read(), 90.0);
        assert_eq!(m.span_log().len(), 3);
        assert_eq!(m.split().train_joules, 90.0);
    }

    #[test]
    fn nested_spans_count_once() {
        let clock = FakeClock::default();
        let mut m = CpuTimeMeter::with_clock(clock.clone(), 10.0).unwrap();
        m.begin_span(SpanKind::Train, Some(3)).unwrap();
        m.begin_span(SpanKind::Predict, None).unwrap();
        clock.advance(1.0);
        m.end_span(SpanKind::Predict).unwrap();
        m.end_span(SpanKind::Train).unwrap();
        assert_eq!(m.split(), EnergySplit { train_joules: 10.0, predict_joules: 0.0 });
    }

    #[test]
    fn unbalanced_spans_are_errors() {
        let mut m = cpu_time_meter(45.0).unwrap();
        assert_eq!(m.end_span(SpanKind::Train), Err(EnergyError::Unbalanced(SpanKind::Train)));
        m.begin_span(SpanKind::Predict, None).unwrap();
        assert!(matches!(m.end_span(SpanKind::Train), Err(EnergyError::Mismatched { .. })));
        assert!(cpu_time_meter(0.0).is_err());
        assert!(cpu_time_meter(f64::NAN).is_err());
    }

    #[test]
    fn process_clock_is_monotone() {
        let c = ProcessCpuClock;
        let a = c.cpu_seconds();
        let mut x = 0u64;
        for i in 0..1_000_000u64 {
            x = x.wrapping_mul(31).wrapping_add(i);
        }
        std::hint::black_box(x);
        assert!(c.cpu_seconds() >= a);
    }

    #[test]
    fn deterministic_meter_examples() {
        let table = CostTable {
            joules_per_train_instance: 2.0,
            joules_per_predict: 0.5,
        };
        let mut m = deterministic_meter(table).unwrap();
        assert_eq!(m.read(), 0.0);
        m.begin_span(SpanKind::Train, Some(100)).unwrap();
        m.end_span(SpanKind::Train).unwrap();
        assert_eq!(m.read(), 200.0);
        for _ in 0..10 {
            m.begin_span(SpanKind::Predict, None).unwrap();
            m.end_span(SpanKind::Predict).unwrap();
        }
        assert_eq!(m.split(), EnergySplit { train_joules: 200.0, predict_joules: 5.0 });
        assert_eq!(m.begin_span(SpanKind::Train, None), Err(EnergyError::MissingInstanceCount));
        assert!(m.is_deterministic());
    }

    #[test]
    fn invalid_tables_rejected() {
        let bad = CostTable {
            joules_per_train_instance: -1.0,
            joules_per_predict: 0.0,
        };
        assert!(deterministic_meter(bad).is_err());
        let bad = CostTable {
            joules_per_train_instance: 0.0,
            joules_per_predict: f64::INFINITY,
        };
        assert!(deterministic_meter(bad).is_err());
    }

    #[test]
    fn gco2e_examples() {
        let c = |i| CarbonConfig::new(i, "x").unwrap();
        assert_eq!(to_gco2e(3.6e6, &c(250.0)), 250.0);
        assert_eq!(to_gco2e(0.0, &c(250.0)), 0.0);
        assert_eq!(to_gco2e(1.8e6, &c(190.0)), 95.0);
        assert!(CarbonConfig::new(0.0, "x").is_err());
        assert_eq!(CarbonConfig::default().region_label, "ES");
    }

    proptest::proptest! {
        #[test]
        fn deterministic_partition_additivity(parts in proptest::collection::vec(0u64..500, 1..20)) {
            let table = CostTable { joules_per_train_instance: 0.75, joules_per_predict: 0.0 };
            let mut split = deterministic_meter(table).unwrap();
            for &p in &parts {
                split.begin_span(SpanKind::Train, Some(p)).unwrap();
                split.end_span(SpanKind::Train).unwrap();
            }
            let mut whole = deterministic_meter(table).unwrap();
            whole.begin_span(SpanKind::Train, Some(parts.iter().sum())).unwrap();
            whole.end_span(SpanKind::Train).unwrap();
            proptest::prop_assert_eq!(split.read(), whole.read());
        }

        #[test]
        fn gco2e_is_linear(j in 0.0f64..1e9, a in 1.0f64..1000.0, s in 0.1f64..10.0) {
            let base = to_gco2e(j, &CarbonConfig::new(a, "x").unwrap());
            let scaled = to_gco2e(j, &CarbonConfig::new(a * s, "x").unwrap());
            proptest::prop_assert!((scaled - s * base).abs() <= 1e-12 * scaled.abs().max(1e-300));
        }
    }
}
