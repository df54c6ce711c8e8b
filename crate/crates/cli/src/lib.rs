//! Shared pieces of the `pappi` binary: option groups, definition loading and
//! the HTTP service around a [`Checkpoint`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pappi_core::checkpoint::{Checkpoint, CheckpointError, LedgerState, PrivacyBudget, QueryRequest, QueryResponse};
use pappi_core::event_log::{read_log_file, ColumnMapping, EventLog, Scope};
use pappi_core::harness::ExperimentSpec;
use pappi_core::ppi_model::{parse_ppi_definition, parse_ppi_definitions, DerivedRegistry, PpiDefinition};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Column names for CSV logs. Ignored for XES input.
#[derive(Debug, Clone, clap::Args)]
pub struct ColumnArgs {
    #[arg(long, global = true, default_value = "case_id")]
    pub case_col: String,
    #[arg(long, global = true, default_value = "activity")]
    pub activity_col: String,
    #[arg(long, global = true, default_value = "timestamp")]
    pub time_col: String,
}

impl ColumnArgs {
    pub fn mapping(&self) -> ColumnMapping {
        ColumnMapping {
            case_col: self.case_col.clone(),
            activity_col: self.activity_col.clone(),
            time_col: self.time_col.clone(),
        }
    }
}

/// Release parameters that override what definition or spec files say.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Threshold falloff factor.
    #[arg(long, global = true)]
    pub xi: Option<u32>,
    /// Bucket count for sample-and-aggregate.
    #[arg(long, global = true)]
    pub buckets: Option<usize>,
    /// Fractional domain extension applied to both bounds.
    #[arg(long, global = true)]
    pub extend: Option<f64>,
}

impl Overrides {
    pub fn validate(&self) -> anyhow::Result<()> {
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e > 0.0) {
                bail!("--epsilon must be positive");
            }
        }
        if self.xi == Some(0) {
            bail!("--xi must be at least 1");
        }
        if matches!(self.buckets, Some(b) if b < 2) {
            bail!("--buckets must be at least 2");
        }
        if let Some(x) = self.extend {
            if !(x.is_finite() && x >= 0.0) {
                bail!("--extend must be non-negative");
            }
        }
        Ok(())
    }

    pub fn apply_to_definition(&self, def: &mut PpiDefinition) {
        if let Some(e) = self.epsilon {
            def.epsilon = e;
        }
        if let Some(xi) = self.xi {
            def.params.xi = xi;
        }
        if let Some(b) = self.buckets {
            def.params.buckets = Some(b);
        }
        if let Some(x) = self.extend {
            def.params.ext_low = x;
            def.params.ext_high = x;
        }
    }

    pub fn apply_to_spec(&self, spec: &mut ExperimentSpec) {
        if let Some(e) = self.epsilon {
            spec.epsilons = vec![e];
        }
        if let Some(xi) = self.xi {
            spec.xi = xi;
        }
        if let Some(b) = self.buckets {
            spec.buckets = Some(b);
        }
        if let Some(x) = self.extend {
            spec.extensions = vec![x];
        }
    }
}

pub fn load_log(path: &Path, columns: &ColumnArgs) -> anyhow::Result<EventLog> {
    read_log_file(path, &columns.mapping()).with_context(|| format!("reading log {}", path.display()))
}

pub fn load_definitions(path: &Path, overrides: &Overrides) -> anyhow::Result<Vec<PpiDefinition>> {
    let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut defs = parse_ppi_definitions(&src, &DerivedRegistry::with_builtins())
        .with_context(|| format!("parsing {}", path.display()))?;
    for d in &mut defs {
        overrides.apply_to_definition(d);
    }
    Ok(defs)
}

pub fn load_state(path: &Path) -> anyhow::Result<LedgerState> {
    let src = std::fs::read_to_string(path).with_context(|| format!("reading state {}", path.display()))?;
    serde_json::from_str(&src).with_context(|| format!("parsing state {}", path.display()))
}

/// Writes through a temporary file so a crash never leaves half a ledger.
pub fn save_state(path: &Path, state: &LedgerState) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(state)?)?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing state {}", path.display()))
}

/// Budget view served by `GET /budget` and printed by `pappi budget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetView {
    pub total: f64,
    pub spent: f64,
    pub remaining: f64,
    pub scope_allocation: Option<f64>,
    pub per_scope: BTreeMap<String, f64>,
    pub releases: usize,
}

pub fn budget_view(state: &LedgerState) -> BudgetView {
    let b = &state.budget;
    BudgetView {
        total: b.total(),
        spent: b.spent(),
        remaining: b.remaining(None),
        scope_allocation: b.scope_allocation(),
        per_scope: b.per_scope().clone(),
        releases: state.records.len(),
    }
}

/// Error body of the HTTP API and of a failed `pappi query`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn invalid(message: impl Into<String>) -> Self {
        ApiError {
            code: "invalid_request".into(),
            message: message.into(),
        }
    }

    fn status(&self) -> StatusCode {
        match self.code.as_str() {
            "budget_exhausted" => StatusCode::FORBIDDEN,
            "empty_scope" | "mechanism_precondition_failed" => StatusCode::UNPROCESSABLE_ENTITY,
            "internal" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

impl From<CheckpointError> for ApiError {
    fn from(e: CheckpointError) -> Self {
        ApiError {
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

/// Request body of `POST /query`. `ppi` is either the id of a loaded
/// definition or a definition object; `scope` is either a label such as
/// `"2015-03"` / `"2015-W09"` or a scope object.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryBody {
    #[serde(default)]
    pub query_id: Option<String>,
    pub ppi: Value,
    pub scope: Value,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

pub fn parse_scope(value: &Value) -> Result<Scope, ApiError> {
    match value {
        Value::String(label) => label.parse().map_err(|e| ApiError::invalid(format!("scope: {e}"))),
        other => serde_json::from_value(other.clone()).map_err(|e| ApiError::invalid(format!("scope: {e}"))),
    }
}

pub struct Service {
    checkpoint: Checkpoint,
    ppis: BTreeMap<String, Arc<PpiDefinition>>,
    overrides: Overrides,
    state_path: Option<PathBuf>,
    // Serializes state writes so the file always matches some ledger prefix.
    persist: Mutex<()>,
}

impl Service {
    pub fn new(checkpoint: Checkpoint, ppis: Vec<PpiDefinition>, overrides: Overrides) -> Self {
        Service {
            checkpoint,
            ppis: ppis.into_iter().map(|d| (d.id.clone(), Arc::new(d))).collect(),
            overrides,
            state_path: None,
            persist: Mutex::new(()),
        }
    }

    /// Persist the ledger to `path` after every successful release.
    pub fn persist_to(mut self, path: PathBuf) -> Self {
        self.state_path = Some(path);
        self
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    fn definition(&self, value: &Value) -> Result<Arc<PpiDefinition>, ApiError> {
        match value {
            Value::String(id) => self
                .ppis
                .get(id)
                .cloned()
                .ok_or_else(|| ApiError::invalid(format!("unknown PPI '{id}'"))),
            Value::Object(_) => {
                let mut def = parse_ppi_definition(&value.to_string(), &DerivedRegistry::with_builtins())
                    .map_err(|e| ApiError::invalid(e.to_string()))?;
                self.overrides.apply_to_definition(&mut def);
                Ok(Arc::new(def))
            }
            _ => Err(ApiError::invalid("ppi must be an id or a definition object")),
        }
    }

    pub fn query(&self, body: &QueryBody) -> Result<QueryResponse, ApiError> {
        let request = QueryRequest {
            query_id: body.query_id.clone(),
            ppi: self.definition(&body.ppi)?,
            scope: parse_scope(&body.scope)?,
            epsilon: body.epsilon.or(self.overrides.epsilon),
        };
        let response = self.checkpoint.handle_query(&request)?;
        if let Some(path) = &self.state_path {
            let _guard = self.persist.lock().unwrap_or_else(|p| p.into_inner());
            save_state(path, &self.checkpoint.state()).map_err(|e| ApiError {
                code: "internal".into(),
                message: format!("release {} granted but not persisted: {e:#}", response.record_id),
            })?;
        }
        Ok(response)
    }
}

async fn query(State(service): State<Arc<Service>>, body: Result<Json<QueryBody>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return ApiError::invalid(e.body_text()).into_response(),
    };
    let outcome = tokio::task::spawn_blocking(move || service.query(&body)).await;
    match outcome {
        Ok(Ok(response)) => Json(response).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError {
            code: "internal".into(),
            message: e.to_string(),
        }
        .into_response(),
    }
}

async fn budget(State(service): State<Arc<Service>>) -> Json<BudgetView> {
    Json(budget_view(&service.checkpoint.state()))
}

async fn audit(State(service): State<Arc<Service>>) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], service.checkpoint.export_audit()).into_response()
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/query", post(query))
        .route("/budget", get(budget))
        .route("/audit", get(audit))
        .with_state(service)
}

/// Fresh ledger, or the persisted one when `state` exists.
pub fn open_ledger(state: Option<&Path>, budget: Option<f64>, scope_allocation: Option<f64>) -> anyhow::Result<LedgerState> {
    match state {
        Some(path) if path.exists() => {
            if budget.is_some() {
                eprintln!("note: --budget ignored, resuming ledger from {}", path.display());
            }
            load_state(path)
        }
        _ => {
            let total = budget.context("--budget is required when no ledger state exists yet")?;
            let mut b = PrivacyBudget::new(total)?;
            if let Some(a) = scope_allocation {
                b = b.with_scope_allocation(a)?;
            }
            Ok(LedgerState::new(b))
        }
    }
}
