//! Sample-and-aggregate for derived measures whose sensitivity is unknown but
//! whose output range is fixed: evaluate on disjoint buckets, then release a
//! Laplace-noised mean of the bucket results.

use rand::seq::SliceRandom;
use rand::Rng;

use super::laplace::laplace_noise;
use super::{check_epsilon, MechanismError};
use crate::scalar::Scalar;

/// `floor(sqrt(n))`, but never below 2.
pub fn default_bucket_count(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleAggregateOutcome<T> {
    pub value: T,
    pub buckets: usize,
    /// Sensitivity of the bucket mean, `(hi - lo) / m`.
    pub sensitivity: T,
    /// Buckets whose evaluation failed and were replaced by the range midpoint.
    pub failed_buckets: usize,
}

/// Shuffles `items`, splits them into `buckets` equal parts (the remainder
/// goes to the last bucket), evaluates each part, clamps each result into
/// `output_range` and releases the noisy mean.
///
/// The noise is drawn before the shuffle, so over a constant function this
/// equals a Laplace release of the constant from the same generator state.
pub fn sample_aggregate_release<T, I, F, R>(
    items: &[I],
    buckets: usize,
    epsilon: T,
    output_range: Option<(T, T)>,
    mut evaluate: F,
    rng: &mut R,
) -> Result<SampleAggregateOutcome<T>, MechanismError>
where
    T: Scalar,
    F: FnMut(&[&I]) -> Option<T>,
    R: Rng + ?Sized,
{
    check_epsilon(epsilon)?;
    if buckets < 2 {
        return Err(MechanismError::InvalidBucketCount);
    }
    let (lo, hi) = output_range.ok_or(MechanismError::MissingOutputRange)?;
    if lo > hi {
        return Err(MechanismError::InvalidDomain);
    }
    let needed = 2 * buckets;
    if items.len() < needed {
        return Err(MechanismError::TooFewTraces {
            needed,
            available: items.len(),
        });
    }

    let m = T::from_usize(buckets).expect("bucket count fits scalar");
    let sensitivity = (hi - lo) / m;
    let noise = laplace_noise(sensitivity / epsilon, rng);

    let mut order: Vec<&I> = items.iter().collect();
    order.shuffle(rng);
    let size = items.len() / buckets;
    let midpoint = (lo + hi) * T::half();
    let mut failed = 0;
    let mut total = T::zero();
    for b in 0..buckets {
        let start = b * size;
        let end = if b + 1 == buckets { order.len() } else { start + size };
        let value = match evaluate(&order[start..end]) {
            Some(v) if v.is_finite() => v.max(lo).min(hi),
            _ => {
                failed += 1;
                midpoint
            }
        };
        total = total + value;
    }
    Ok(SampleAggregateOutcome {
        value: total / m + noise,
        buckets,
        sensitivity,
        failed_buckets: failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{laplace_release, stream_rng, AggregateFn, Sensitivity};

    #[test]
    fn bucket_default() {
        assert_eq!(default_bucket_count(1), 2);
        assert_eq!(default_bucket_count(24), 4);
        assert_eq!(default_bucket_count(100), 10);
    }

    #[test]
    fn constant_buckets_with_large_epsilon() {
        let items: Vec<u32> = (0..30).collect();
        let out = sample_aggregate_release::<f64, _, _, _>(
            &items,
            5,
            1e9,
            Some((0.0, 100.0)),
            |_| Some(42.0),
            &mut stream_rng(1, 0),
        )
        .unwrap();
        assert!((out.value - 42.0).abs() < 1e-6);
        assert_eq!(out.sensitivity, 20.0);
    }

    #[test]
    fn bucket_sizes_and_remainder() {
        let items: Vec<u32> = (0..23).collect();
        let mut sizes = Vec::new();
        sample_aggregate_release(
            &items,
            5,
            1.0,
            Some((0.0, 1.0)),
            |bucket| {
                sizes.push(bucket.len());
                Some(0.5)
            },
            &mut stream_rng(1, 0),
        )
        .unwrap();
        assert_eq!(sizes, vec![4, 4, 4, 4, 7]);
    }

    #[test]
    fn buckets_are_disjoint_and_cover() {
        let items: Vec<u32> = (0..40).collect();
        let mut seen = Vec::new();
        sample_aggregate_release(
            &items,
            4,
            1.0,
            Some((0.0, 1.0)),
            |bucket| {
                seen.extend(bucket.iter().map(|v| **v));
                Some(0.0)
            },
            &mut stream_rng(9, 0),
        )
        .unwrap();
        seen.sort();
        assert_eq!(seen, items);
    }

    #[test]
    fn preconditions() {
        let items: Vec<u32> = (0..9).collect();
        let eval = |_: &[&u32]| Some(1.0);
        assert_eq!(
            sample_aggregate_release(&items, 5, 1.0, Some((0.0, 1.0)), eval, &mut stream_rng(0, 0)),
            Err(MechanismError::TooFewTraces {
                needed: 10,
                available: 9
            })
        );
        assert_eq!(
            sample_aggregate_release(&items, 2, 1.0, None, eval, &mut stream_rng(0, 0)),
            Err(MechanismError::MissingOutputRange)
        );
        assert_eq!(
            sample_aggregate_release(&items, 1, 1.0, Some((0.0, 1.0)), eval, &mut stream_rng(0, 0)),
            Err(MechanismError::InvalidBucketCount)
        );
    }

    #[test]
    fn constant_equals_laplace_under_shared_seed() {
        let items: Vec<u32> = (0..50).collect();
        for seed in 0..20 {
            let sa = sample_aggregate_release(
                &items,
                5,
                0.3,
                Some((0.0, 100.0)),
                |_| Some(70.0),
                &mut stream_rng(seed, 4),
            )
            .unwrap();
            let sens = Sensitivity {
                value: 20.0,
                fn_kind: AggregateFn::Mean,
            };
            let lap = laplace_release(70.0, &sens, 0.3, &mut stream_rng(seed, 4)).unwrap();
            assert_eq!(sa.value, lap);
        }
    }

    #[test]
    fn out_of_range_results_are_clamped() {
        let items: Vec<u32> = (0..10).collect();
        let out = sample_aggregate_release::<f64, _, _, _>(
            &items,
            2,
            1e12,
            Some((0.0, 1.0)),
            |_| Some(5.0),
            &mut stream_rng(2, 2),
        )
        .unwrap();
        assert!((out.value - 1.0).abs() < 1e-9);
    }
}
