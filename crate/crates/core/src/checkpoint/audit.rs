use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::event_log::Scope;
use crate::mechanisms::{DomainMode, Mechanism};

/// How one admissible node was privatized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRelease {
    pub node: String,
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub domain_mode: DomainMode,
    /// Input cardinality, present only when the definition allows publishing it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<usize>,
}

/// Append-only audit entry for one successful release. Holds no plain result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseRecord {
    pub record_id: u64,
    pub query_id: String,
    pub timestamp: DateTime<Utc>,
    pub ppi_id: String,
    pub scope: Scope,
    pub admissible_set: Vec<String>,
    pub nodes: Vec<NodeRelease>,
    pub epsilon_charged: f64,
    pub released_value: f64,
    pub domain_mode: DomainMode,
    pub cardinality_released: bool,
    pub deviations: Vec<String>,
}

/// Newline-delimited JSON, one record per line in the given order.
pub fn export_audit<'a>(records: impl IntoIterator<Item = &'a ReleaseRecord>) -> Vec<u8> {
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record).expect("records serialize");
        out.push(b'\n');
    }
    out
}
