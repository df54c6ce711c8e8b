//! Interval-based exponential mechanism: the function range is partitioned
//! into intervals, each scored by its index distance to the interval holding
//! the true result, and a value is drawn uniformly from a sampled interval.

use rand::Rng;

use super::domain::{compute_sensitivity_generalized, DomainEstimate, Sensitivity};
use super::threshold::{score_threshold, threshold_split, ThresholdSpec};
use super::{check_epsilon, AggregateFn, MechanismConfig, MechanismError};
use crate::event_log::Dataset;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lower: T, upper: T) -> Self {
        debug_assert!(lower <= upper);
        Interval { lower, upper }
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> T {
        (self.lower + self.upper) * T::half()
    }

    pub fn contains(&self, x: T) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Contiguous, ordered intervals covering the function range, plus the index
/// `k` of the interval that holds the true result.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    intervals: Vec<Interval<T>>,
    result_index: usize,
}

impl<T: Scalar> Partition<T> {
    /// Builds a partition from its boundary points (`edges.len() >= 2`).
    pub fn from_edges(edges: &[T], result_index: usize) -> Self {
        assert!(edges.len() >= 2, "a partition needs at least two edges");
        let intervals: Vec<_> = edges
            .windows(2)
            .map(|w| Interval::new(w[0], w[1]))
            .collect();
        assert!(result_index < intervals.len());
        Partition {
            intervals,
            result_index,
        }
    }

    pub fn intervals(&self) -> &[Interval<T>] {
        &self.intervals
    }

    pub fn result_index(&self) -> usize {
        self.result_index
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn lower(&self) -> T {
        self.intervals[0].lower
    }

    pub fn upper(&self) -> T {
        self.intervals[self.intervals.len() - 1].upper
    }

    /// Inner boundary points, i.e. every edge except the two range ends.
    pub fn boundaries(&self) -> Vec<T> {
        self.intervals[1..].iter().map(|i| i.lower).collect()
    }

    pub(crate) fn edges(&self) -> Vec<T> {
        let mut edges: Vec<T> = self.intervals.iter().map(|i| i.lower).collect();
        edges.push(self.upper());
        edges
    }
}

/// A partition with its scores and the resulting sampling probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPartition<T> {
    pub partition: Partition<T>,
    pub scores: Vec<i64>,
    /// Score sensitivity Δq used in the exponent.
    pub delta_q: u32,
    pub probabilities: Vec<T>,
}

impl<T: Scalar> ScoredPartition<T> {
    pub fn new(
        partition: Partition<T>,
        scores: Vec<i64>,
        delta_q: u32,
        epsilon: T,
    ) -> Result<Self, MechanismError> {
        let probabilities =
            interval_probabilities(&partition, &scores, epsilon, T::from_u32(delta_q).unwrap())?;
        Ok(ScoredPartition {
            partition,
            scores,
            delta_q,
            probabilities,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        sample_from_partition(&self.partition, &self.probabilities, rng)
    }

    /// Probability that a draw lands in `[lo, hi]`, assuming uniform density
    /// inside each interval.
    pub fn mass_between(&self, lo: T, hi: T) -> T {
        self.partition
            .intervals()
            .iter()
            .zip(&self.probabilities)
            .map(|(interval, p)| {
                let overlap = interval.upper.min(hi) - interval.lower.max(lo);
                if overlap <= T::zero() {
                    T::zero()
                } else if interval.width() <= T::zero() {
                    *p
                } else {
                    *p * overlap / interval.width()
                }
            })
            .fold(T::zero(), |a, b| a + b)
    }
}

/// Range of `fn_kind` over the extended domain: the domain itself for
/// min/max/mean, the domain scaled by `n` for sum.
pub fn function_range<T: Scalar>(
    fn_kind: AggregateFn,
    domain: &DomainEstimate<T>,
    n: usize,
) -> (T, T) {
    let (lo, hi) = (domain.extended_lower(), domain.extended_upper());
    match fn_kind {
        AggregateFn::Sum => {
            let n = T::from_usize(n).expect("n fits scalar");
            (lo * n, hi * n)
        }
        _ => (lo, hi),
    }
}

/// Partitions the range of `fn_kind`.
///
/// Mean and sum use tiles of width Δf centred on f(X), laid outward and cut
/// at the range ends. Min and max place boundaries halfway between
/// neighbouring distinct values.
pub fn build_intervals<T: Scalar>(
    fn_kind: AggregateFn,
    data: &Dataset<T>,
    domain: &DomainEstimate<T>,
    sensitivity: &Sensitivity<T>,
) -> Result<Partition<T>, MechanismError> {
    let result = fn_kind
        .apply(data.values())
        .ok_or(MechanismError::EmptyDataset)?;
    let (lo, hi) = function_range(fn_kind, domain, data.len());
    if !(hi - lo > T::zero()) {
        return Err(MechanismError::DegenerateRange);
    }
    match fn_kind {
        AggregateFn::Mean | AggregateFn::Sum => {
            let width = sensitivity.value;
            if !(width > T::zero()) {
                return Err(MechanismError::DegenerateRange);
            }
            let center = result.max(lo).min(hi);
            let half = width * T::half();
            let tol = width * T::lit(1e-9);
            let mut left = Vec::new();
            let mut j = T::zero();
            loop {
                let b = center - half - j * width;
                if b <= lo + tol {
                    break;
                }
                left.push(b);
                j = j + T::one();
            }
            let mut right = Vec::new();
            let mut j = T::zero();
            loop {
                let b = center + half + j * width;
                if b >= hi - tol {
                    break;
                }
                right.push(b);
                j = j + T::one();
            }
            let k = left.len();
            let mut edges = Vec::with_capacity(left.len() + right.len() + 2);
            edges.push(lo);
            edges.extend(left.into_iter().rev());
            edges.extend(right);
            edges.push(hi);
            Ok(Partition::from_edges(&edges, k))
        }
        AggregateFn::Min | AggregateFn::Max => {
            let distinct = data.sorted_distinct();
            let mut edges = Vec::with_capacity(distinct.len() + 1);
            edges.push(lo);
            edges.extend(
                distinct
                    .windows(2)
                    .map(|w| (w[0] + w[1]) * T::half())
                    .filter(|b| *b > lo && *b < hi),
            );
            edges.push(hi);
            let probe = Partition::from_edges(&edges, 0);
            let k = probe
                .intervals()
                .iter()
                .position(|i| i.contains(result))
                .unwrap_or(if result < lo { 0 } else { probe.len() - 1 });
            Ok(Partition::from_edges(&edges, k))
        }
    }
}

/// Plain scores `q(i) = -|k - i|`; their sensitivity is 1.
pub fn score_plain<T: Scalar>(partition: &Partition<T>) -> Vec<i64> {
    let k = partition.result_index() as i64;
    (0..partition.len() as i64).map(|i| -(k - i).abs()).collect()
}

/// `P(I_i) ∝ |I_i| · exp(ε q(i) / (2 Δq))`, shifted by the maximal score.
pub fn interval_probabilities<T: Scalar>(
    partition: &Partition<T>,
    scores: &[i64],
    epsilon: T,
    delta_q: T,
) -> Result<Vec<T>, MechanismError> {
    check_epsilon(epsilon)?;
    assert_eq!(scores.len(), partition.len(), "one score per interval");
    let top = scores.iter().copied().max().unwrap_or(0);
    let two = T::lit(2.0);
    let weights: Vec<T> = partition
        .intervals()
        .iter()
        .zip(scores)
        .map(|(interval, &q)| {
            let shifted = T::from_i64(q - top).expect("score fits scalar");
            interval.width() * (epsilon * shifted / (two * delta_q)).exp()
        })
        .collect();
    let total = weights.iter().copied().fold(T::zero(), |a, b| a + b);
    if !(total > T::zero()) {
        return Err(MechanismError::AllZeroWidth);
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Draws an interval by its probability, then a uniform value inside it.
pub fn sample_from_partition<T: Scalar, R: Rng + ?Sized>(
    partition: &Partition<T>,
    probabilities: &[T],
    rng: &mut R,
) -> T {
    let u = T::lit(rng.random::<f64>());
    let mut cumulative = T::zero();
    let mut chosen = None;
    for (i, p) in probabilities.iter().enumerate() {
        if *p <= T::zero() {
            continue;
        }
        cumulative = cumulative + *p;
        chosen = Some(i);
        if u < cumulative {
            break;
        }
    }
    let interval = partition.intervals()[chosen.expect("some interval has positive mass")];
    let v = T::lit(rng.random::<f64>());
    (interval.lower + interval.width() * v).min(interval.upper)
}

/// Result of one interval-mechanism release.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalOutcome<T> {
    pub value: T,
    /// The range had zero width and the true value was released.
    pub degenerate: bool,
    pub sum_sensitivity_generalized: bool,
    pub interval_count: usize,
}

/// Builds and scores the partition for `fn_kind` without sampling. With a
/// threshold the partition is split at the threshold and scored with falloff
/// ξ, and Δq becomes ξ.
pub fn interval_distribution<T: Scalar>(
    fn_kind: AggregateFn,
    data: &Dataset<T>,
    config: &MechanismConfig<T>,
    domain: &DomainEstimate<T>,
    threshold: Option<&ThresholdSpec<T>>,
) -> Result<(ScoredPartition<T>, bool), MechanismError> {
    config.validate()?;
    let data = domain.clamp(data);
    let (sensitivity, generalized) = compute_sensitivity_generalized(fn_kind, domain, data.len())?;
    let partition = build_intervals(fn_kind, &data, domain, &sensitivity)?;
    let scored = match threshold {
        None => {
            let scores = score_plain(&partition);
            ScoredPartition::new(partition, scores, 1, config.epsilon)?
        }
        Some(chi) => {
            let result = fn_kind
                .apply(data.values())
                .ok_or(MechanismError::EmptyDataset)?;
            let split = threshold_split(&partition, chi, result);
            let (scores, delta_q) = score_threshold(&split, chi, result, config.xi)?;
            ScoredPartition::new(split, scores, delta_q, config.epsilon)?
        }
    };
    Ok((scored, generalized))
}

/// Full interval (or threshold-sensitive) release. A zero-width range
/// releases the true value.
pub fn interval_release<T: Scalar, R: Rng + ?Sized>(
    fn_kind: AggregateFn,
    data: &Dataset<T>,
    config: &MechanismConfig<T>,
    domain: &DomainEstimate<T>,
    threshold: Option<&ThresholdSpec<T>>,
    rng: &mut R,
) -> Result<IntervalOutcome<T>, MechanismError> {
    match interval_distribution(fn_kind, data, config, domain, threshold) {
        Ok((scored, generalized)) => Ok(IntervalOutcome {
            value: scored.sample(rng),
            degenerate: false,
            sum_sensitivity_generalized: generalized,
            interval_count: scored.partition.len(),
        }),
        Err(MechanismError::DegenerateRange) => {
            let clamped = domain.clamp(data);
            let value = fn_kind
                .apply(clamped.values())
                .ok_or(MechanismError::EmptyDataset)?;
            Ok(IntervalOutcome {
                value,
                degenerate: true,
                sum_sensitivity_generalized: false,
                interval_count: 1,
            })
        }
        Err(e) => Err(e),
    }
}
