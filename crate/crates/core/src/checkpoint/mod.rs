//! The single access point between analysts and the event data: scoping,
//! privatization over the selected admissible set, budget accounting and the
//! audit trail.
//!
//! An `EmptyScope` answer is returned before any mechanism runs and is not
//! charged, so it discloses whether a window holds traces at all.

mod audit;
mod budget;
mod epsilon;
mod release;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{export_audit, NodeRelease, ReleaseRecord};
pub use budget::{PrivacyBudget, Reservation};
pub use epsilon::EpsilonSplit;
pub use release::{release_ppi, resolve_admissible, PpiRelease, ReleaseError};

use crate::event_log::{filter_scope, EventLog, Granularity, Scope};
use crate::mechanisms::stream_rng;
use crate::ppi_model::PpiDefinition;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckpointError {
    #[error("privacy budget exhausted: requested {requested}, remaining {remaining}")]
    BudgetExhausted { requested: f64, remaining: f64 },
    #[error("no trace falls inside the requested scope")]
    EmptyScope,
    #[error("mechanism precondition failed: {0}")]
    MechanismPreconditionFailed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl CheckpointError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CheckpointError::BudgetExhausted { .. } => "budget_exhausted",
            CheckpointError::EmptyScope => "empty_scope",
            CheckpointError::MechanismPreconditionFailed(_) => "mechanism_precondition_failed",
            CheckpointError::InvalidRequest(_) => "invalid_request",
        }
    }
}

impl From<ReleaseError> for CheckpointError {
    fn from(e: ReleaseError) -> Self {
        match e {
            ReleaseError::Mechanism { .. } => CheckpointError::MechanismPreconditionFailed(e.to_string()),
            ReleaseError::Split(inner) => inner,
            other => CheckpointError::InvalidRequest(other.to_string()),
        }
    }
}

/// Maximum number of traces one individual contributes to a scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndividualBound(u32);

impl IndividualBound {
    pub fn new(n_max: u32) -> Result<Self, CheckpointError> {
        if n_max == 0 {
            return Err(CheckpointError::InvalidRequest("n_max must be at least 1".into()));
        }
        Ok(IndividualBound(n_max))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl Default for IndividualBound {
    fn default() -> Self {
        IndividualBound(1)
    }
}

#[derive(Debug, Clone)]
pub struct QueryRequest {
    pub query_id: Option<String>,
    pub ppi: Arc<PpiDefinition>,
    pub scope: Scope,
    /// Defaults to the definition's ε.
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub value: f64,
    pub epsilon_charged: f64,
    pub record_id: u64,
}

/// Budget and audit trail, persisted together so they always reconcile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerState {
    pub budget: PrivacyBudget,
    pub records: Vec<ReleaseRecord>,
}

impl LedgerState {
    pub fn new(budget: PrivacyBudget) -> Self {
        LedgerState {
            budget,
            records: Vec::new(),
        }
    }
}

/// remaining budget, globally or for one scope.
pub fn remaining_budget(budget: &PrivacyBudget, scope: Option<&Scope>) -> f64 {
    budget.remaining(scope)
}

pub struct Checkpoint {
    log: Arc<EventLog>,
    ledger: Mutex<LedgerState>,
    bound: IndividualBound,
    seed: u64,
    counter: AtomicU64,
}

impl Checkpoint {
    pub fn new(log: Arc<EventLog>, budget: PrivacyBudget, bound: IndividualBound, seed: u64) -> Self {
        Self::with_state(log, LedgerState::new(budget), bound, seed)
    }

    /// Resumes from a persisted ledger. Release streams continue after the
    /// last recorded release so resumed runs never reuse noise.
    pub fn with_state(log: Arc<EventLog>, state: LedgerState, bound: IndividualBound, seed: u64) -> Self {
        let next = state.records.iter().map(|r| r.record_id + 1).max().unwrap_or(0);
        Checkpoint {
            log,
            ledger: Mutex::new(state),
            bound,
            seed,
            counter: AtomicU64::new(next),
        }
    }

    fn lock(&self) -> MutexGuard<'_, LedgerState> {
        self.ledger.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn handle_query(&self, request: &QueryRequest) -> Result<QueryResponse, CheckpointError> {
        let ppi = &request.ppi;
        let epsilon = request.epsilon.unwrap_or(ppi.epsilon);
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(CheckpointError::InvalidRequest("epsilon must be positive and finite".into()));
        }
        let granularity = request.scope.granularity;
        if granularity != Granularity::Custom && granularity != ppi.scope_granularity {
            return Err(CheckpointError::InvalidRequest(format!(
                "PPI `{}` is scoped {:?}, request is {:?}",
                ppi.id, ppi.scope_granularity, granularity
            )));
        }

        let reservation = self.lock().budget.reserve(&request.scope, epsilon)?;
        let traces = filter_scope(&self.log, &request.scope);
        if traces.is_empty() {
            self.lock().budget.release(reservation);
            return Err(CheckpointError::EmptyScope);
        }
        let release_id = self.counter.fetch_add(1, Ordering::SeqCst);
        let mut rng = stream_rng(self.seed, release_id);
        let released = match release_ppi(ppi, &traces, epsilon, self.bound.get(), &mut rng) {
            Ok(r) => r,
            Err(e) => {
                self.lock().budget.release(reservation);
                return Err(e.into());
            }
        };

        let record = ReleaseRecord {
            record_id: release_id,
            query_id: request.query_id.clone().unwrap_or_else(|| format!("q{release_id}")),
            timestamp: Utc::now(),
            ppi_id: ppi.id.clone(),
            scope: request.scope,
            admissible_set: released.admissible.names(&ppi.tree),
            domain_mode: released.domain_mode(),
            cardinality_released: released.nodes.iter().any(|n| n.cardinality.is_some()),
            nodes: released.nodes,
            epsilon_charged: epsilon,
            released_value: released.value,
            deviations: released.deviations,
        };
        let mut ledger = self.lock();
        ledger.budget.commit(reservation);
        ledger.records.push(record);
        Ok(QueryResponse {
            value: released.value,
            epsilon_charged: epsilon,
            record_id: release_id,
        })
    }

    pub fn budget(&self) -> PrivacyBudget {
        self.lock().budget.clone()
    }

    pub fn remaining_budget(&self, scope: Option<&Scope>) -> f64 {
        self.lock().budget.remaining(scope)
    }

    pub fn records(&self) -> Vec<ReleaseRecord> {
        self.lock().records.clone()
    }

    pub fn export_audit(&self) -> Vec<u8> {
        export_audit(&self.lock().records)
    }

    pub fn state(&self) -> LedgerState {
        self.lock().clone()
    }
}
