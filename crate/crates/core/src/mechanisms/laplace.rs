use rand::Rng;

use super::domain::{compute_sensitivity_generalized, DomainEstimate, Sensitivity};
use super::{check_epsilon, AggregateFn, MechanismError};
use crate::event_log::Dataset;
use crate::scalar::Scalar;

/// One draw from Laplace(0, scale) by inverse CDF:
/// `-scale · sign(u) · ln(1 - 2|u|)` with `u` uniform on (-1/2, 1/2).
pub fn laplace_noise<T: Scalar, R: Rng + ?Sized>(scale: T, rng: &mut R) -> T {
    if scale == T::zero() {
        return T::zero();
    }
    let u = loop {
        let raw: f64 = rng.random();
        if raw > 0.0 {
            break raw - 0.5;
        }
    };
    let magnitude = -(1.0 - 2.0 * u.abs()).ln();
    scale * T::lit(u.signum() * magnitude)
}

/// `true_value` plus Laplace noise of scale Δf / ε.
pub fn laplace_release<T: Scalar, R: Rng + ?Sized>(
    true_value: T,
    sensitivity: &Sensitivity<T>,
    epsilon: T,
    rng: &mut R,
) -> Result<T, MechanismError> {
    check_epsilon(epsilon)?;
    Ok(true_value + laplace_noise(sensitivity.value / epsilon, rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceOutcome<T> {
    pub value: T,
    pub sensitivity: T,
    pub sum_sensitivity_generalized: bool,
}

/// Laplace release of an aggregation over `data`, with the sensitivity taken
/// from the domain estimate.
pub fn laplace_aggregate_release<T: Scalar, R: Rng + ?Sized>(
    fn_kind: AggregateFn,
    data: &Dataset<T>,
    epsilon: T,
    domain: &DomainEstimate<T>,
    rng: &mut R,
) -> Result<LaplaceOutcome<T>, MechanismError> {
    let data = domain.clamp(data);
    let true_value = fn_kind
        .apply(data.values())
        .ok_or(MechanismError::EmptyDataset)?;
    let (sensitivity, generalized) = compute_sensitivity_generalized(fn_kind, domain, data.len())?;
    let value = laplace_release(true_value, &sensitivity, epsilon, rng)?;
    Ok(LaplaceOutcome {
        value,
        sensitivity: sensitivity.value,
        sum_sensitivity_generalized: generalized,
    })
}
