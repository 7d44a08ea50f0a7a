//! Audio token pruning driven by per-sample attention-head routing.
//!
//! The pipeline probes text-to-audio attention per head without positional
//! encoding ([`probe`]), summarizes how unevenly selective the heads are
//! ([`router`]), mixes three calibrated head-weight profiles with a Gaussian
//! kernel over that summary, and keeps the top-k audio tokens under the
//! mixed weighting ([`pruner`]). Reference selectors live in [`baselines`],
//! profile estimation in [`calibration`], and a deterministic workload
//! generator in [`synth`].

pub mod baselines;
pub mod calibration;
pub mod error;
pub mod probe;
pub mod pruner;
pub mod rng;
pub mod router;
pub mod synth;
pub mod tensor_io;

pub use error::{Error, Result};
pub use probe::HeadMarginals;
pub use pruner::{Method, PruneConfig, PruneResult, RoutingMode, StageTimings};
pub use router::{ProfileBank, ProfileKind, RoutingDecision, SelectivityStats};
pub use tensor_io::{Category, SampleBundle, Tensor};
