//! Data valuation and training-set cleansing through a thresholding bandit.
//!
//! The core loop (`engine`) estimates per-instance data Shapley values only
//! to the precision needed to decide which side of a threshold `tau` each
//! instance falls on. Arms are training instances, a pull is one marginal
//! contribution drawn from a random permutation, and the APT index
//! `sqrt(T_n) * (|phi_hat_n - tau| + eps)` steers sampling toward instances
//! whose classification is still uncertain. Everything downstream of the
//! estimates (removal ordering, sweep over how many instances to drop,
//! final retraining) lives in `harness`.
//!
//! Supporting modules:
//!
//! * [`dataset`] — instance store, CSV ingestion, split assignment, label
//!   corruption for controlled experiments.
//! * [`learners`] — ridge, CART, k-NN and a data-independent constant
//!   predictor; all deterministic, refit from scratch on every subset.
//! * [`metrics`] — validation metrics, marginal contributions, and the
//!   evaluation context shared by every valuation method.
//! * [`baselines`] — exact Shapley (subset enumeration), truncated Monte
//!   Carlo Shapley, grouped leave-one-out, random removal.
//! * [`theory`] — sample-complexity and failure-probability bounds, width
//!   bounds per metric, and the sufficient iteration count.
//! * [`simulator`] — synthetic-arm bandit runs that check the failure
//!   bounds empirically.
//! * [`harness`] — experiment configs, the per-seed cleansing pipeline,
//!   aggregation and file outputs.
//!
//! The whole crate is generic over the scalar type via [`Float`]; the
//! aliases below fix `f64`, which is what the CLI uses.

pub mod baselines;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod float;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod simulator;
pub mod theory;

pub use error::{Error, Result};
pub use float::Float;

/// `f64` aliases for the common case.
pub type Dataset64 = dataset::Dataset<f64>;
pub type LearnerSpec64 = learners::LearnerSpec<f64>;
pub type FittedModel64 = learners::FittedModel<f64>;
pub type RunContext64<'a> = metrics::RunContext<'a, f64>;
pub type TdshapConfig64 = engine::TdshapConfig<f64>;
pub type ValuationResult64 = engine::ValuationResult<f64>;
pub type TheoryReport64 = theory::TheoryReport<f64>;
pub type ExperimentConfig64 = harness::ExperimentConfig<f64>;
pub type CleansingReport64 = harness::CleansingReport<f64>;

/// `f32` aliases for callers that trade precision for footprint.
pub type Dataset32 = dataset::Dataset<f32>;
pub type LearnerSpec32 = learners::LearnerSpec<f32>;
pub type TdshapConfig32 = engine::TdshapConfig<f32>;

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derives an independent seed for a sub-process (noise injection, random
/// baseline, ...) so that no two consumers of an experiment seed share an
/// RNG stream by accident.
pub(crate) fn derive_seed(seed: u64, salt: u64) -> u64 {
    splitmix64(seed ^ splitmix64(salt))
}

/// ChaCha generator on a numbered stream of the given seed; streams are
/// statistically independent, so parallel work can draw from stream i
/// without coordinating with stream j.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
