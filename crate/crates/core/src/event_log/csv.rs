use std::collections::BTreeSet;
use std::io::{Read, Write};

use ::csv::{ReaderBuilder, StringRecord, WriterBuilder};
use chrono::SecondsFormat;

use super::{is_reserved, parse_timestamp, AttrValue, Event, EventLog, LogError};

/// Names of the CSV columns holding the mandatory attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub case_col: String,
    pub activity_col: String,
    pub time_col: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            case_col: super::CASE_ID.to_string(),
            activity_col: super::ACTIVITY.to_string(),
            time_col: super::TIMESTAMP.to_string(),
        }
    }
}

fn column(headers: &StringRecord, name: &str) -> Result<usize, LogError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| LogError::MissingMandatoryColumn(name.to_string()))
}

/// Reads a headed CSV event table. Columns other than the three mapped ones
/// become event attributes, typed by [`AttrValue::infer`].
pub fn parse_csv<R: Read>(source: R, mapping: &ColumnMapping) -> Result<EventLog, LogError> {
    let mut reader = ReaderBuilder::new().flexible(false).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(LogError::EmptyInput);
    }
    let case_idx = column(&headers, &mapping.case_col)?;
    let activity_idx = column(&headers, &mapping.activity_col)?;
    let time_idx = column(&headers, &mapping.time_col)?;

    let mut extra = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        if idx == case_idx || idx == activity_idx || idx == time_idx {
            continue;
        }
        let name = name.trim().to_string();
        if is_reserved(&name) {
            return Err(LogError::ReservedAttribute(name));
        }
        extra.push((idx, name));
    }

    let mut events = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let raw_ts = &record[time_idx];
        let timestamp = parse_timestamp(raw_ts).ok_or_else(|| LogError::UnparsableTimestamp {
            row: row + 1,
            value: raw_ts.to_string(),
        })?;
        let mut event = Event::new(&record[case_idx], &record[activity_idx], timestamp);
        for (idx, name) in &extra {
            event
                .attributes
                .insert(name.clone(), AttrValue::infer(&record[*idx]));
        }
        events.push(event);
    }
    if events.is_empty() {
        return Err(LogError::EmptyInput);
    }
    let schema = extra.into_iter().map(|(_, name)| name).collect();
    Ok(EventLog::from_events(events, schema))
}

/// Writes the log with the default column mapping; the inverse of [`parse_csv`].
pub fn write_csv<W: Write>(log: &EventLog, sink: W) -> Result<(), LogError> {
    let mut columns: Vec<String> = log.schema().to_vec();
    let mut seen: BTreeSet<String> = columns.iter().cloned().collect();
    for trace in log.traces() {
        for event in trace.events() {
            for name in event.attributes.keys() {
                if seen.insert(name.clone()) {
                    columns.push(name.clone());
                }
            }
        }
    }

    let mut writer = WriterBuilder::new().from_writer(sink);
    let mut header = vec![
        super::CASE_ID.to_string(),
        super::ACTIVITY.to_string(),
        super::TIMESTAMP.to_string(),
    ];
    header.extend(columns.iter().cloned());
    writer.write_record(&header)?;
    for trace in log.traces() {
        for event in trace.events() {
            let mut row = vec![
                event.case_id.clone(),
                event.activity.clone(),
                event
                    .timestamp
                    .to_rfc3339_opts(SecondsFormat::AutoSi, true),
            ];
            row.extend(columns.iter().map(|c| {
                event
                    .attributes
                    .get(c)
                    .map(AttrValue::to_cell)
                    .unwrap_or_default()
            }));
            writer.write_record(&row)?;
        }
    }
    writer.flush()?;
    Ok(())
}
