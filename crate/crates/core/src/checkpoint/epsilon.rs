use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::CheckpointError;

/// Requested ε divided evenly over the privatized nodes and scaled down by
/// the individual-appearance bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSplit {
    pub requested: f64,
    pub nodes: usize,
    pub n_max: u32,
    /// Largest `f64` not above the exact share; mechanisms run with this value.
    pub per_node: f64,
}

impl EpsilonSplit {
    pub fn new(requested: f64, nodes: usize, n_max: u32) -> Result<Self, CheckpointError> {
        if !(requested.is_finite() && requested > 0.0) {
            return Err(CheckpointError::InvalidRequest("epsilon must be positive and finite".into()));
        }
        if nodes == 0 || n_max == 0 {
            return Err(CheckpointError::InvalidRequest("epsilon split needs at least one node".into()));
        }
        let divisor = nodes as f64 * n_max as f64;
        let mut split = EpsilonSplit {
            requested,
            nodes,
            n_max,
            per_node: requested / divisor,
        };
        let exact = split.exact_share();
        while rational(split.per_node) > exact {
            split.per_node = f64::from_bits(split.per_node.to_bits() - 1);
        }
        Ok(split)
    }

    /// `requested / (nodes · n_max)` as an exact rational.
    pub fn exact_share(&self) -> BigRational {
        rational(self.requested) / BigRational::from_integer(BigInt::from(self.nodes) * BigInt::from(self.n_max))
    }

    /// Checks `share · nodes · n_max == requested` in exact arithmetic.
    pub fn reconciles(&self) -> bool {
        let back = self.exact_share() * BigRational::from_integer(BigInt::from(self.nodes) * BigInt::from(self.n_max));
        back == rational(self.requested) && rational(self.per_node) <= self.exact_share()
    }
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite epsilon")
}
