use serde::{Deserialize, Serialize};

use super::{AggregateFn, MechanismError};
use crate::event_log::Dataset;
use crate::scalar::Scalar;

/// Where the bounds of a domain estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainMode {
    /// Read from the data (min/max), so the partition itself depends on the input.
    Estimated,
    /// Configured ahead of time and shared by all neighbouring inputs.
    Fixed,
}

/// Estimated input domain `[lower, upper]` with fractional extensions on
/// either side, measured relative to the unextended width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainEstimate<T> {
    pub lower: T,
    pub upper: T,
    pub extension_low: T,
    pub extension_high: T,
    pub mode: DomainMode,
}

impl<T: Scalar> DomainEstimate<T> {
    pub fn new(
        lower: T,
        upper: T,
        extension_low: T,
        extension_high: T,
        mode: DomainMode,
    ) -> Result<Self, MechanismError> {
        let finite = lower.is_finite() && upper.is_finite();
        if !finite || lower > upper || extension_low < T::zero() || extension_high < T::zero() {
            return Err(MechanismError::InvalidDomain);
        }
        Ok(DomainEstimate {
            lower,
            upper,
            extension_low,
            extension_high,
            mode,
        })
    }

    /// A data-independent domain without extensions.
    pub fn fixed(lower: T, upper: T) -> Result<Self, MechanismError> {
        Self::new(lower, upper, T::zero(), T::zero(), DomainMode::Fixed)
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    pub fn extended_lower(&self) -> T {
        self.lower - self.extension_low * self.width()
    }

    pub fn extended_upper(&self) -> T {
        self.upper + self.extension_high * self.width()
    }

    /// Clamps values into the extended domain. A no-op for estimated domains,
    /// which contain the data by construction.
    pub fn clamp(&self, data: &Dataset<T>) -> Dataset<T> {
        let (lo, hi) = (self.extended_lower(), self.extended_upper());
        data.map(|v| v.max(lo).min(hi))
    }
}

/// Domain from the observed minimum and maximum, extended by the given fractions.
pub fn estimate_domain<T: Scalar>(
    data: &Dataset<T>,
    ext_low: T,
    ext_high: T,
) -> Result<DomainEstimate<T>, MechanismError> {
    let (Some(lower), Some(upper)) = (data.min(), data.max()) else {
        return Err(MechanismError::EmptyDataset);
    };
    DomainEstimate::new(lower, upper, ext_low, ext_high, DomainMode::Estimated)
}

/// Maximal change of `fn_kind` when one element changes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity<T> {
    pub value: T,
    pub fn_kind: AggregateFn,
}

/// Closed-form sensitivity on the extended domain bounds: `hi - lo` for
/// min/max, `(hi - lo) / n` for mean and `hi` for sum.
pub fn compute_sensitivity<T: Scalar>(
    fn_kind: AggregateFn,
    domain: &DomainEstimate<T>,
    n: usize,
) -> Result<Sensitivity<T>, MechanismError> {
    if n == 0 {
        return Err(MechanismError::EmptyDataset);
    }
    let (lo, hi) = (domain.extended_lower(), domain.extended_upper());
    let value = match fn_kind {
        AggregateFn::Min | AggregateFn::Max => (hi - lo).abs(),
        AggregateFn::Mean => (hi - lo).abs() / T::from_usize(n).expect("n fits scalar"),
        AggregateFn::Sum => {
            if lo < T::zero() {
                return Err(MechanismError::NegativeDomainForSum);
            }
            hi
        }
    };
    Ok(Sensitivity { value, fn_kind })
}

/// Like [`compute_sensitivity`], but for sums over a domain reaching below
/// zero it falls back to `max(|lo|, |hi|)`. The flag reports that fallback.
pub fn compute_sensitivity_generalized<T: Scalar>(
    fn_kind: AggregateFn,
    domain: &DomainEstimate<T>,
    n: usize,
) -> Result<(Sensitivity<T>, bool), MechanismError> {
    match compute_sensitivity(fn_kind, domain, n) {
        Err(MechanismError::NegativeDomainForSum) => {
            let value = domain
                .extended_lower()
                .abs()
                .max(domain.extended_upper().abs());
            Ok((Sensitivity { value, fn_kind }, true))
        }
        other => other.map(|s| (s, false)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_x() -> Dataset<f64> {
        Dataset::new(vec![2.0, 3.0, 7.0, 8.0, 10.0])
    }

    #[test]
    fn estimate_without_extension() {
        let d = estimate_domain(&sample_x(), 0.0, 0.0).unwrap();
        assert_eq!((d.extended_lower(), d.extended_upper()), (2.0, 10.0));
    }

    #[test]
    fn estimate_with_fifteen_percent() {
        let d = estimate_domain(&sample_x(), 0.15, 0.15).unwrap();
        assert!((d.extended_lower() - 0.8).abs() < 1e-12);
        assert!((d.extended_upper() - 11.2).abs() < 1e-12);
    }

    #[test]
    fn singleton_domain() {
        let d = estimate_domain(&Dataset::new(vec![5.0]), 0.0, 0.0).unwrap();
        assert_eq!((d.lower, d.upper), (5.0, 5.0));
        assert_eq!(
            estimate_domain(&Dataset::<f64>::new(vec![]), 0.0, 0.0),
            Err(MechanismError::EmptyDataset)
        );
    }

    #[test]
    fn closed_forms() {
        let d = estimate_domain(&sample_x(), 0.0, 0.0).unwrap();
        assert_eq!(compute_sensitivity(AggregateFn::Min, &d, 5).unwrap().value, 8.0);
        assert_eq!(compute_sensitivity(AggregateFn::Max, &d, 5).unwrap().value, 8.0);
        assert_eq!(compute_sensitivity(AggregateFn::Mean, &d, 5).unwrap().value, 1.6);
        assert_eq!(compute_sensitivity(AggregateFn::Sum, &d, 5).unwrap().value, 10.0);
    }

    #[test]
    fn mean_sensitivity_halves_when_n_doubles() {
        let d = DomainEstimate::fixed(0.0, 37.0).unwrap();
        for n in [1usize, 3, 10, 77, 100] {
            let a = compute_sensitivity(AggregateFn::Mean, &d, n).unwrap().value;
            let b = compute_sensitivity(AggregateFn::Mean, &d, 2 * n).unwrap().value;
            assert_eq!(b, a / 2.0);
        }
    }

    #[test]
    fn negative_sum_domain() {
        let d = DomainEstimate::fixed(-4.0, 3.0).unwrap();
        assert_eq!(
            compute_sensitivity(AggregateFn::Sum, &d, 3),
            Err(MechanismError::NegativeDomainForSum)
        );
        let (s, generalized) = compute_sensitivity_generalized(AggregateFn::Sum, &d, 3).unwrap();
        assert!(generalized);
        assert_eq!(s.value, 4.0);
        let (s, generalized) =
            compute_sensitivity_generalized(AggregateFn::Max, &d, 3).unwrap();
        assert!(!generalized);
        assert_eq!(s.value, 7.0);
    }

    #[test]
    fn invalid_domains() {
        assert!(DomainEstimate::fixed(3.0f32, 1.0).is_err());
        assert!(DomainEstimate::new(0.0, 1.0, -0.1, 0.0, DomainMode::Estimated).is_err());
    }

    #[test]
    fn fixed_domain_clamps() {
        let d = DomainEstimate::fixed(0.0, 5.0).unwrap();
        let clamped = d.clamp(&Dataset::new(vec![-1.0, 2.0, 9.0]));
        assert_eq!(clamped.values(), &[0.0, 2.0, 5.0]);
    }
}
