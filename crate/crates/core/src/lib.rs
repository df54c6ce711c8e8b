//! Privacy checkpoint for process performance indicators (PPIs).
//!
//! PPIs are function composition trees over event-log traces. The checkpoint
//! evaluates them inside the trusted environment, injects calibrated noise at
//! an admissible set of multi-instance measures, debits a privacy budget and
//! records every release in an append-only audit trail.
//!
//! The numeric mechanisms are generic over [`Scalar`]; the aliases below fix
//! them to `f64`, which is what the rest of the crate uses.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admissible;
pub mod checkpoint;
pub mod event_log;
pub mod harness;
pub mod mechanisms;
pub mod ppi_model;
pub mod scalar;

pub use scalar::Scalar;

pub type Dataset = event_log::Dataset<f64>;
pub type DomainEstimate = mechanisms::DomainEstimate<f64>;
pub type Sensitivity = mechanisms::Sensitivity<f64>;
pub type Interval = mechanisms::Interval<f64>;
pub type Partition = mechanisms::Partition<f64>;
pub type ScoredPartition = mechanisms::ScoredPartition<f64>;
pub type MechanismConfig = mechanisms::MechanismConfig<f64>;
pub type ThresholdSpec = mechanisms::ThresholdSpec<f64>;

/// Single-precision variants of the mechanism types.
pub type Dataset32 = event_log::Dataset<f32>;
pub type DomainEstimate32 = mechanisms::DomainEstimate<f32>;
pub type Partition32 = mechanisms::Partition<f32>;
