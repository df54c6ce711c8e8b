//! Threshold-sensitive variant of the interval mechanism. Intervals are split
//! where the outcome of the threshold test flips, and intervals whose values
//! flip the outcome lose `ξ · d(i)` score, `d(i)` being the index distance to
//! the nearest outcome-preserving interval.

use serde::{Deserialize, Serialize};

use super::intervals::Partition;
use super::MechanismError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub fn holds<T: Scalar>(self, x: T, bound: T) -> bool {
        match self {
            Comparator::Lt => x < bound,
            Comparator::Le => x <= bound,
            Comparator::Gt => x > bound,
            Comparator::Ge => x >= bound,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdBound<T> {
    Absolute(T),
    /// Offset added to the true result, i.e. a bound of `f(X) + offset`.
    Relative(T),
}

/// Boolean target test `x <op> bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSpec<T> {
    pub comparator: Comparator,
    pub bound: ThresholdBound<T>,
}

impl<T: Scalar> ThresholdSpec<T> {
    pub fn absolute(comparator: Comparator, bound: T) -> Self {
        ThresholdSpec {
            comparator,
            bound: ThresholdBound::Absolute(bound),
        }
    }

    pub fn relative(comparator: Comparator, offset: T) -> Self {
        ThresholdSpec {
            comparator,
            bound: ThresholdBound::Relative(offset),
        }
    }

    /// Absolute bound; relative bounds resolve against the true result.
    pub fn resolve(&self, true_value: T) -> T {
        match self.bound {
            ThresholdBound::Absolute(b) => b,
            ThresholdBound::Relative(offset) => true_value + offset,
        }
    }

    pub fn test(&self, x: T, true_value: T) -> bool {
        self.comparator.holds(x, self.resolve(true_value))
    }

    /// Whether `x` yields the same outcome as the true result.
    pub fn preserves(&self, x: T, true_value: T) -> bool {
        self.test(x, true_value) == self.test(true_value, true_value)
    }
}

/// Splits every interval strictly containing the threshold bound at that
/// bound, and re-indexes `k` to the piece holding the true result on the side
/// sharing its outcome.
pub fn threshold_split<T: Scalar>(
    partition: &Partition<T>,
    chi: &ThresholdSpec<T>,
    true_value: T,
) -> Partition<T> {
    let bound = chi.resolve(true_value);
    let mut edges = partition.edges();
    if bound > partition.lower() && bound < partition.upper() && !edges.contains(&bound) {
        let at = edges.iter().position(|e| *e > bound).expect("bound inside range");
        edges.insert(at, bound);
    }
    let probe = Partition::from_edges(&edges, 0);
    let containing: Vec<usize> = probe
        .intervals()
        .iter()
        .enumerate()
        .filter(|(_, i)| i.contains(true_value))
        .map(|(idx, _)| idx)
        .collect();
    let k = containing
        .iter()
        .copied()
        .find(|&idx| chi.preserves(probe.intervals()[idx].midpoint(), true_value))
        .or_else(|| containing.first().copied())
        .unwrap_or_else(|| {
            if true_value < probe.lower() {
                0
            } else {
                probe.len() - 1
            }
        });
    Partition::from_edges(&edges, k)
}

/// Scores for a split partition together with the score sensitivity Δq = ξ.
pub fn score_threshold<T: Scalar>(
    partition: &Partition<T>,
    chi: &ThresholdSpec<T>,
    true_value: T,
    xi: u32,
) -> Result<(Vec<i64>, u32), MechanismError> {
    if xi < 1 {
        return Err(MechanismError::InvalidFalloff);
    }
    let preserving: Vec<bool> = partition
        .intervals()
        .iter()
        .map(|i| chi.preserves(i.midpoint(), true_value))
        .collect();
    let preserving_idx: Vec<i64> = preserving
        .iter()
        .enumerate()
        .filter(|(_, p)| **p)
        .map(|(i, _)| i as i64)
        .collect();
    let k = partition.result_index() as i64;
    let scores = preserving
        .iter()
        .enumerate()
        .map(|(i, &keeps)| {
            let i = i as i64;
            let base = -(k - i).abs();
            if keeps {
                base
            } else {
                let d = preserving_idx
                    .iter()
                    .map(|&j| (j - i).abs())
                    .min()
                    .unwrap_or(0);
                base - i64::from(xi) * d
            }
        })
        .collect();
    Ok((scores, xi))
}
