//! Cost-aware importance sampling and rejection ABC for simulation-based inference.
//!
//! Parameters are drawn from a proposal that down-weights expensive regions of
//! parameter space, `π̃_g(θ) ∝ π(θ) / g(c(θ))`, and reweighted with
//! self-normalised importance weights `∝ g(c(θ))` so estimates still target
//! the prior or posterior.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costmodel;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod numeric;
pub mod oracle;
pub mod penalty;
pub mod prior;
pub mod proposal;
pub mod quadrature;
pub mod rng;
pub mod simulators;
pub mod support;

pub use costmodel::{CostModel, CostObservation};
pub use error::{Error, Result};
pub use penalty::{penalty_bounds, BoundsConfig, PenaltyBounds, PenaltySpec};
pub use prior::PriorSpec;
pub use proposal::{CostAwareProposal, MisPlan, WeightedSamples};
pub use rng::RngKey;
pub use simulators::{SimOutput, Simulator};
pub use support::BoxSupport;
