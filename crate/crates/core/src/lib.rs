//! Long-term sustainability vs. performance evaluation for batch and
//! streaming classifiers.
//!
//! The crate provides
//!
//! * a model contract ([`Model`]) with batch (`fit`) and streaming
//!   (`learn_one`) training operations,
//! * seedable instance sources ([`streams`]),
//! * windowed prequential metrics ([`metrics`]),
//! * span-based energy meters and gCO2e conversion ([`energy`]),
//! * the batch and streaming evaluation protocols with geometric checkpoints
//!   ([`protocol`]),
//! * reference learners: CART and Hoeffding trees, Random Forest,
//!   AdaBoost.M1, Oza online bagging and boosting, and an MLP.
//!
//! Learners are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common instantiations.

pub mod energy;
pub mod ensembles;
pub mod instance;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod protocol;
pub mod rng;
pub mod scalar;
pub mod streams;
pub mod trees;

pub use energy::{
    cpu_time_meter, deterministic_meter, to_gco2e, CarbonConfig, CostTable, CpuTimeMeter,
    DeterministicMeter, EnergyMeter, EnergySplit, SpanKind,
};
pub use instance::{fallback_predict, Instance, Prediction, Schema};
pub use metrics::{EvalWindow, MetricsBundle};
pub use model::{MajorityBaseline, Model, ModelError, Paradigm};
pub use protocol::{
    run, run_batch, run_streaming, sweep, Checkpoint, Mode, ProtocolConfig, RunError, RunResult,
    SweepJob,
};
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use streams::{StreamError, StreamSource};

pub type Instance32 = Instance<f32>;
pub type Instance64 = Instance<f64>;

pub type Cart32 = trees::CartModel<f32>;
pub type Cart64 = trees::CartModel<f64>;
pub type HoeffdingTree32 = trees::HoeffdingTree<f32>;
pub type HoeffdingTree64 = trees::HoeffdingTree<f64>;

pub type RandomForest32 = ensembles::RandomForest<f32>;
pub type RandomForest64 = ensembles::RandomForest<f64>;
pub type AdaBoostM1_32 = ensembles::AdaBoostM1<f32>;
pub type AdaBoostM1_64 = ensembles::AdaBoostM1<f64>;
pub type OzaBagging32 = ensembles::OzaBagging<f32>;
pub type OzaBagging64 = ensembles::OzaBagging<f64>;
pub type OzaBoosting32 = ensembles::OzaBoosting<f32>;
pub type OzaBoosting64 = ensembles::OzaBoosting<f64>;

pub type Mlp32 = neural::Mlp<f32>;
pub type Mlp64 = neural::Mlp<f64>;
