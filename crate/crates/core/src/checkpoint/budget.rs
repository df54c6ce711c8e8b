use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CheckpointError;
use crate::event_log::Scope;

/// Absorbs the rounding of summed f64 charges, e.g. ten charges of 0.1
/// against a total of 1.0.
const SLACK: f64 = 1e-12;

/// Opaque handle for ε held back while a mechanism runs.
#[derive(Debug, PartialEq)]
#[must_use = "a reservation must be committed or released"]
pub struct Reservation {
    scope: String,
    epsilon: f64,
}

impl Reservation {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    total: f64,
    spent: f64,
    /// Optional cap on what any single scope may consume.
    scope_allocation: Option<f64>,
    per_scope: BTreeMap<String, f64>,
    #[serde(skip)]
    reserved: f64,
    #[serde(skip)]
    reserved_per_scope: BTreeMap<String, f64>,
}

impl PrivacyBudget {
    pub fn new(total: f64) -> Result<Self, CheckpointError> {
        if !(total.is_finite() && total > 0.0) {
            return Err(CheckpointError::InvalidRequest("budget total must be positive".into()));
        }
        Ok(PrivacyBudget {
            total,
            spent: 0.0,
            scope_allocation: None,
            per_scope: BTreeMap::new(),
            reserved: 0.0,
            reserved_per_scope: BTreeMap::new(),
        })
    }

    pub fn with_scope_allocation(mut self, allocation: f64) -> Result<Self, CheckpointError> {
        if !(allocation.is_finite() && allocation > 0.0) {
            return Err(CheckpointError::InvalidRequest("scope allocation must be positive".into()));
        }
        self.scope_allocation = Some(allocation);
        Ok(self)
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn scope_allocation(&self) -> Option<f64> {
        self.scope_allocation
    }

    pub fn per_scope(&self) -> &BTreeMap<String, f64> {
        &self.per_scope
    }

    fn scope_spent(&self, key: &str) -> f64 {
        self.per_scope.get(key).copied().unwrap_or(0.0)
    }

    /// `total − spent`, or for a scope the smaller of its allocation remainder
    /// and the global remainder.
    pub fn remaining(&self, scope: Option<&Scope>) -> f64 {
        let global = (self.total - self.spent).max(0.0);
        match (scope, self.scope_allocation) {
            (Some(s), Some(a)) => (a - self.scope_spent(&s.label())).max(0.0).min(global),
            _ => global,
        }
    }

    /// Holds `epsilon` for `scope` unless that would overdraw the budget.
    pub fn reserve(&mut self, scope: &Scope, epsilon: f64) -> Result<Reservation, CheckpointError> {
        let key = scope.label();
        let global_left = self.total - self.spent - self.reserved;
        let mut remaining = global_left;
        if let Some(a) = self.scope_allocation {
            let held = self.reserved_per_scope.get(&key).copied().unwrap_or(0.0);
            remaining = remaining.min(a - self.scope_spent(&key) - held);
        }
        if epsilon > remaining + SLACK {
            return Err(CheckpointError::BudgetExhausted {
                requested: epsilon,
                remaining: remaining.max(0.0),
            });
        }
        self.reserved += epsilon;
        *self.reserved_per_scope.entry(key.clone()).or_insert(0.0) += epsilon;
        Ok(Reservation { scope: key, epsilon })
    }

    fn unhold(&mut self, r: &Reservation) {
        self.reserved = (self.reserved - r.epsilon).max(0.0);
        if let Some(held) = self.reserved_per_scope.get_mut(&r.scope) {
            *held -= r.epsilon;
            if *held <= SLACK {
                self.reserved_per_scope.remove(&r.scope);
            }
        }
    }

    /// Turns a reservation into spent budget.
    pub fn commit(&mut self, r: Reservation) {
        self.unhold(&r);
        self.spent += r.epsilon;
        *self.per_scope.entry(r.scope).or_insert(0.0) += r.epsilon;
    }

    /// Returns a reservation without charging it.
    pub fn release(&mut self, r: Reservation) {
        self.unhold(&r);
    }

    pub fn reserved(&self) -> f64 {
        self.reserved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jan() -> Scope {
        Scope::monthly(2024, 1)
    }

    #[test]
    fn fresh_and_after_one_release() {
        let mut b = PrivacyBudget::new(1.0).unwrap();
        assert_eq!(b.remaining(None), 1.0);
        let r = b.reserve(&jan(), 0.1).unwrap();
        b.commit(r);
        assert!((b.remaining(None) - 0.9).abs() < 1e-15);
        assert_eq!(b.per_scope()["2024-01"], 0.1);
    }

    #[test]
    fn eleventh_query_refused() {
        let mut b = PrivacyBudget::new(1.0).unwrap();
        for _ in 0..10 {
            let r = b.reserve(&jan(), 0.1).unwrap();
            b.commit(r);
        }
        assert!(matches!(b.reserve(&jan(), 0.1), Err(CheckpointError::BudgetExhausted { .. })));
        assert!(b.spent() <= b.total() + SLACK);
    }

    #[test]
    fn release_restores() {
        let mut b = PrivacyBudget::new(0.5).unwrap();
        let r = b.reserve(&jan(), 0.5).unwrap();
        assert!(b.reserve(&jan(), 0.1).is_err());
        b.release(r);
        assert_eq!(b.spent(), 0.0);
        assert_eq!(b.reserved(), 0.0);
        assert!(b.reserve(&jan(), 0.5).is_ok());
    }

    #[test]
    fn scope_allocation() {
        let mut b = PrivacyBudget::new(1.0).unwrap().with_scope_allocation(0.3).unwrap();
        let feb = Scope::monthly(2024, 2);
        assert_eq!(b.remaining(Some(&feb)), 0.3);
        for _ in 0..3 {
            let r = b.reserve(&jan(), 0.1).unwrap();
            b.commit(r);
        }
        assert!(b.reserve(&jan(), 0.1).is_err());
        assert_eq!(b.remaining(Some(&feb)), 0.3);
        assert!(b.reserve(&feb, 0.1).is_ok());
    }
}
