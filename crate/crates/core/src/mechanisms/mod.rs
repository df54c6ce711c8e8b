//! ε-differentially private release mechanisms for multi-instance measures.
//!
//! Everything here is generic over [`Scalar`]; the checkpoint instantiates it
//! with `f64`. Mechanisms never hold state: randomness comes from an explicit
//! RNG handle, see [`stream_rng`].

mod domain;
mod intervals;
mod laplace;
mod rng;
mod sample_aggregate;
mod threshold;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use domain::{
    compute_sensitivity, compute_sensitivity_generalized, estimate_domain, DomainEstimate,
    DomainMode, Sensitivity,
};
pub use intervals::{
    build_intervals, function_range, interval_distribution, interval_probabilities,
    interval_release, sample_from_partition, score_plain, Interval, IntervalOutcome, Partition,
    ScoredPartition,
};
pub use laplace::{laplace_aggregate_release, laplace_noise, laplace_release, LaplaceOutcome};
pub use rng::{stream_rng, ReleaseRng};
pub use sample_aggregate::{default_bucket_count, sample_aggregate_release, SampleAggregateOutcome};
pub use threshold::{score_threshold, threshold_split, Comparator, ThresholdBound, ThresholdSpec};

/// Aggregation functions with closed-form sensitivities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateFn {
    Min,
    Max,
    Mean,
    Sum,
}

impl AggregateFn {
    pub const ALL: [AggregateFn; 4] = [
        AggregateFn::Min,
        AggregateFn::Max,
        AggregateFn::Mean,
        AggregateFn::Sum,
    ];

    /// `None` on empty input.
    pub fn apply<T: Scalar>(self, values: &[T]) -> Option<T> {
        let mut iter = values.iter().copied();
        let first = iter.next()?;
        Some(match self {
            AggregateFn::Min => iter.fold(first, T::min),
            AggregateFn::Max => iter.fold(first, T::max),
            AggregateFn::Sum => iter.fold(first, |a, b| a + b),
            AggregateFn::Mean => {
                let sum = iter.fold(first, |a, b| a + b);
                sum / T::from_usize(values.len()).expect("length fits scalar")
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AggregateFn::Min => "min",
            AggregateFn::Max => "max",
            AggregateFn::Mean => "mean",
            AggregateFn::Sum => "sum",
        }
    }
}

impl std::str::FromStr for AggregateFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(AggregateFn::Min),
            "max" => Ok(AggregateFn::Max),
            "mean" => Ok(AggregateFn::Mean),
            "sum" => Ok(AggregateFn::Sum),
            other => Err(format!("unknown aggregation function `{other}`")),
        }
    }
}

/// Release mechanism selectable per admissible node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Laplace,
    Interval,
    Threshold,
    SampleAggregate,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Laplace => "laplace",
            Mechanism::Interval => "interval",
            Mechanism::Threshold => "threshold",
            Mechanism::SampleAggregate => "sample_aggregate",
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "laplace" => Ok(Mechanism::Laplace),
            "interval" => Ok(Mechanism::Interval),
            "threshold" => Ok(Mechanism::Threshold),
            "sample_aggregate" => Ok(Mechanism::SampleAggregate),
            other => Err(format!("unknown mechanism `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("epsilon must be positive and finite")]
    InvalidEpsilon,
    #[error("falloff factor xi must be at least 1")]
    InvalidFalloff,
    #[error("bucket count must be at least 2")]
    InvalidBucketCount,
    #[error("invalid domain: lower bound exceeds upper bound or extension is negative")]
    InvalidDomain,
    #[error("sum sensitivity is undefined for a domain with negative values")]
    NegativeDomainForSum,
    #[error("function range has zero width")]
    DegenerateRange,
    #[error("all intervals have zero width")]
    AllZeroWidth,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample-and-aggregate needs at least {needed} traces, found {available}")]
    TooFewTraces { needed: usize, available: usize },
    #[error("derived measure declares no output range")]
    MissingOutputRange,
}

pub const DEFAULT_XI: u32 = 3;

/// Parameters shared by the release mechanisms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismConfig<T> {
    pub epsilon: T,
    /// Falloff factor ξ of the threshold-sensitive mechanism.
    pub xi: u32,
    /// Bucket count m of sample-and-aggregate; `None` picks [`default_bucket_count`].
    pub buckets: Option<usize>,
    pub rng_seed: Option<u64>,
}

impl<T: Scalar> MechanismConfig<T> {
    pub fn new(epsilon: T) -> Result<Self, MechanismError> {
        let config = MechanismConfig {
            epsilon,
            xi: DEFAULT_XI,
            buckets: None,
            rng_seed: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_xi(mut self, xi: u32) -> Result<Self, MechanismError> {
        self.xi = xi;
        self.validate()?;
        Ok(self)
    }

    pub fn with_buckets(mut self, buckets: usize) -> Result<Self, MechanismError> {
        self.buckets = Some(buckets);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        check_epsilon(self.epsilon)?;
        if self.xi < 1 {
            return Err(MechanismError::InvalidFalloff);
        }
        if matches!(self.buckets, Some(m) if m < 2) {
            return Err(MechanismError::InvalidBucketCount);
        }
        Ok(())
    }
}

pub(crate) fn check_epsilon<T: Scalar>(epsilon: T) -> Result<(), MechanismError> {
    if epsilon > T::zero() && epsilon.is_finite() {
        Ok(())
    } else {
        Err(MechanismError::InvalidEpsilon)
    }
}
