//! Event data model: events grouped into timestamp-ordered traces, the log
//! that holds them, and calendar scopes used to select traces for a PPI.

mod csv;
mod dataset;
mod scope;
mod xes;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::csv::{parse_csv, write_csv, ColumnMapping};
pub use self::dataset::Dataset;
pub use self::scope::{enumerate_windows, filter_scope, Granularity, Scope, ScopeError};
pub use self::xes::{parse_xes_subset, write_xes};

/// Names reserved for the mandatory schema attributes.
pub const CASE_ID: &str = "case_id";
pub const ACTIVITY: &str = "activity";
pub const TIMESTAMP: &str = "timestamp";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("missing mandatory column `{0}`")]
    MissingMandatoryColumn(String),
    #[error("unparsable timestamp at row {row}: {value:?}")]
    UnparsableTimestamp { row: usize, value: String },
    #[error("input contains no events")]
    EmptyInput,
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("missing concept:name on {0}")]
    MissingConceptName(&'static str),
    #[error("attribute `{0}` shadows a mandatory attribute")]
    ReservedAttribute(String),
    #[error("csv error: {0}")]
    Csv(#[from] ::csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Scalar attribute value carried by an event. Missing values are explicit nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Null,
    Bool(bool),
    Number(f64),
    Text(String),
}

impl AttrValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            AttrValue::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, AttrValue::Null)
    }

    /// Infers the value type from a raw textual cell.
    pub(crate) fn infer(raw: &str) -> AttrValue {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return AttrValue::Null;
        }
        match trimmed {
            "true" | "TRUE" | "True" => return AttrValue::Bool(true),
            "false" | "FALSE" | "False" => return AttrValue::Bool(false),
            _ => {}
        }
        match trimmed.parse::<f64>() {
            Ok(v) if v.is_finite() => AttrValue::Number(v),
            _ => AttrValue::Text(raw.to_string()),
        }
    }

    pub(crate) fn to_cell(&self) -> String {
        match self {
            AttrValue::Null => String::new(),
            AttrValue::Bool(b) => b.to_string(),
            AttrValue::Number(v) => v.to_string(),
            AttrValue::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: DateTime<Utc>,
    pub attributes: BTreeMap<String, AttrValue>,
}

impl Event {
    pub fn new(
        case_id: impl Into<String>,
        activity: impl Into<String>,
        timestamp: DateTime<Utc>,
    ) -> Self {
        Event {
            case_id: case_id.into(),
            activity: activity.into(),
            timestamp,
            attributes: BTreeMap::new(),
        }
    }

    /// Adds an attribute, rejecting names that would shadow the mandatory ones.
    pub fn with_attribute(
        mut self,
        name: impl Into<String>,
        value: AttrValue,
    ) -> Result<Self, LogError> {
        self.set_attribute(name.into(), value)?;
        Ok(self)
    }

    pub fn set_attribute(&mut self, name: String, value: AttrValue) -> Result<(), LogError> {
        if is_reserved(&name) {
            return Err(LogError::ReservedAttribute(name));
        }
        self.attributes.insert(name, value);
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Option<&AttrValue> {
        self.attributes.get(name)
    }
}

pub(crate) fn is_reserved(name: &str) -> bool {
    matches!(name, CASE_ID | ACTIVITY | TIMESTAMP)
}

/// Timestamp-ordered events of one case. Never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    case_id: String,
    events: Vec<Event>,
}

impl Trace {
    /// Builds a trace, stably sorting events by timestamp. Returns `None` for
    /// an empty event list or events belonging to another case.
    pub fn new(case_id: impl Into<String>, mut events: Vec<Event>) -> Option<Self> {
        let case_id = case_id.into();
        if events.is_empty() || events.iter().any(|e| e.case_id != case_id) {
            return None;
        }
        events.sort_by_key(|e| e.timestamp);
        Some(Trace { case_id, events })
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn first_timestamp(&self) -> DateTime<Utc> {
        self.events[0].timestamp
    }

    /// First event carrying the given activity label.
    pub fn first_of(&self, activity: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.activity == activity)
    }

    pub fn count_of(&self, activity: &str) -> usize {
        self.events.iter().filter(|e| e.activity == activity).count()
    }
}

/// A set of traces keyed by case id, plus the declared extra attribute names.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventLog {
    traces: BTreeMap<String, Trace>,
    schema: Vec<String>,
}

impl EventLog {
    /// Groups events by case id into traces. Input order breaks timestamp ties.
    pub fn from_events(events: Vec<Event>, schema: Vec<String>) -> Self {
        let mut grouped: BTreeMap<String, Vec<Event>> = BTreeMap::new();
        for event in events {
            grouped.entry(event.case_id.clone()).or_default().push(event);
        }
        let traces = grouped
            .into_iter()
            .filter_map(|(case, evs)| Trace::new(case.clone(), evs).map(|t| (case, t)))
            .collect();
        EventLog { traces, schema }
    }

    pub fn from_traces(traces: impl IntoIterator<Item = Trace>, schema: Vec<String>) -> Self {
        let mut log = EventLog {
            traces: BTreeMap::new(),
            schema,
        };
        for trace in traces {
            match log.traces.get_mut(trace.case_id()) {
                Some(existing) => {
                    let mut events = std::mem::take(&mut existing.events);
                    events.extend(trace.events);
                    *existing = Trace::new(trace.case_id, events).expect("non-empty trace");
                }
                None => {
                    log.traces.insert(trace.case_id.clone(), trace);
                }
            }
        }
        log
    }

    pub fn traces(&self) -> impl Iterator<Item = &Trace> {
        self.traces.values()
    }

    pub fn trace(&self, case_id: &str) -> Option<&Trace> {
        self.traces.get(case_id)
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn event_count(&self) -> usize {
        self.traces.values().map(|t| t.events.len()).sum()
    }
}

/// Parses an ISO-8601 timestamp and normalizes it to UTC. Timestamps without
/// an offset are read as UTC.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f%z", "%Y-%m-%d %H:%M:%S%.f%z"] {
        if let Ok(ts) = DateTime::parse_from_str(raw, fmt) {
            return Some(ts.with_timezone(&Utc));
        }
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(ts) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(ts.and_utc());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|d| d.and_utc())
}

/// Loads a log from disk, choosing the parser by extension (`.csv`, `.xes`,
/// optionally followed by `.gz`).
pub fn read_log_file(path: &Path, mapping: &ColumnMapping) -> Result<EventLog, LogError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    let file = BufReader::new(File::open(path)?);
    let (reader, stem): (Box<dyn Read>, &str) = match name.strip_suffix(".gz") {
        Some(stem) => (Box::new(flate2::read::GzDecoder::new(file)), stem),
        None => (Box::new(file), name.as_str()),
    };
    if stem.ends_with(".xes") || stem.ends_with(".xml") {
        parse_xes_subset(BufReader::new(reader))
    } else {
        parse_csv(reader, mapping)
    }
}
