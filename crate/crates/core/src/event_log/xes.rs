//! Reader and writer for the subset of XES used by common process-mining logs: `trace`
//! and `event` elements with typed attribute children. Declarations such as
//! `extension`, `global` and `classifier` are skipped.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::SecondsFormat;
use quick_xml::escape::escape;

use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::{is_reserved, parse_timestamp, AttrValue, Event, EventLog, LogError, Trace};

const CONCEPT_NAME: &str = "concept:name";
const TIME_TIMESTAMP: &str = "time:timestamp";

#[derive(Default)]
struct ElementAttrs {
    raw: BTreeMap<String, (String, String)>,
}

impl ElementAttrs {
    fn take(&mut self, key: &str) -> Option<(String, String)> {
        self.raw.remove(key)
    }
}

fn read_key_value(start: &BytesStart<'_>) -> Result<Option<(String, String)>, LogError> {
    let mut key = None;
    let mut value = None;
    for attr in start.attributes() {
        let attr = attr.map_err(|e| LogError::MalformedXml(e.to_string()))?;
        let text = attr
            .unescape_value()
            .map_err(|e| LogError::MalformedXml(e.to_string()))?
            .into_owned();
        match attr.key.as_ref() {
            b"key" => key = Some(text),
            b"value" => value = Some(text),
            _ => {}
        }
    }
    Ok(key.map(|k| (k, value.unwrap_or_default())))
}

fn typed_value(kind: &str, raw: &str) -> AttrValue {
    match kind {
        "int" | "float" => raw
            .trim()
            .parse::<f64>()
            .map(AttrValue::Number)
            .unwrap_or_else(|_| AttrValue::Text(raw.to_string())),
        "boolean" => match raw.trim() {
            "true" => AttrValue::Bool(true),
            "false" => AttrValue::Bool(false),
            _ => AttrValue::Text(raw.to_string()),
        },
        _ => AttrValue::Text(raw.to_string()),
    }
}

fn is_attribute_element(name: &str) -> bool {
    matches!(name, "string" | "date" | "int" | "float" | "boolean" | "id")
}

/// Parses an XES document. Trace-level attributes other than `concept:name`
/// are copied onto events that do not define them.
pub fn parse_xes_subset<R: BufRead>(source: R) -> Result<EventLog, LogError> {
    let mut reader = Reader::from_reader(source);
    reader.config_mut().trim_text(true);

    let mut stack: Vec<String> = Vec::new();
    let mut trace_attrs: Option<ElementAttrs> = None;
    let mut trace_events: Vec<ElementAttrs> = Vec::new();
    let mut event_attrs: Option<ElementAttrs> = None;
    let mut traces = Vec::new();
    let mut event_ordinal = 0usize;
    let mut buf = Vec::new();
    let mut saw_root = false;

    loop {
        let xml_event = reader
            .read_event_into(&mut buf)
            .map_err(|e| LogError::MalformedXml(e.to_string()))?;
        let (start, is_empty) = match &xml_event {
            XmlEvent::Start(s) => (Some(s.clone()), false),
            XmlEvent::Empty(s) => (Some(s.clone()), true),
            XmlEvent::End(end) => {
                let name = String::from_utf8_lossy(end.local_name().as_ref()).into_owned();
                if stack.last() != Some(&name) {
                    return Err(LogError::MalformedXml(format!("unexpected </{name}>")));
                }
                stack.pop();
                close_element(
                    &name,
                    &stack,
                    &mut trace_attrs,
                    &mut trace_events,
                    &mut event_attrs,
                    &mut traces,
                    &mut event_ordinal,
                )?;
                buf.clear();
                continue;
            }
            XmlEvent::Eof => break,
            _ => (None, false),
        };
        if let Some(start) = start {
            let name = String::from_utf8_lossy(start.local_name().as_ref()).into_owned();
            if stack.is_empty() {
                saw_root = true;
            }
            let parent = stack.last().map(String::as_str);
            match name.as_str() {
                "trace" if parent == Some("log") => {
                    trace_attrs = Some(ElementAttrs::default());
                    trace_events.clear();
                }
                "event" if parent == Some("trace") => {
                    event_attrs = Some(ElementAttrs::default());
                }
                n if is_attribute_element(n) => {
                    let owner = match parent {
                        Some("event") => event_attrs.as_mut(),
                        Some("trace") => trace_attrs.as_mut(),
                        _ => None,
                    };
                    if let (Some(owner), Some((key, value))) = (owner, read_key_value(&start)?) {
                        owner.raw.insert(key, (n.to_string(), value));
                    }
                }
                _ => {}
            }
            if is_empty {
                close_element(
                    &name,
                    &stack,
                    &mut trace_attrs,
                    &mut trace_events,
                    &mut event_attrs,
                    &mut traces,
                    &mut event_ordinal,
                )?;
            } else {
                stack.push(name);
            }
        }
        buf.clear();
    }

    if !stack.is_empty() {
        return Err(LogError::MalformedXml(format!(
            "unclosed element <{}>",
            stack.last().unwrap()
        )));
    }
    if !saw_root {
        return Err(LogError::MalformedXml("no root element".into()));
    }
    if traces.is_empty() {
        return Err(LogError::EmptyInput);
    }
    Ok(EventLog::from_traces(traces, Vec::new()))
}

#[allow(clippy::too_many_arguments)]
fn close_element(
    name: &str,
    stack: &[String],
    trace_attrs: &mut Option<ElementAttrs>,
    trace_events: &mut Vec<ElementAttrs>,
    event_attrs: &mut Option<ElementAttrs>,
    traces: &mut Vec<Trace>,
    event_ordinal: &mut usize,
) -> Result<(), LogError> {
    let parent = stack.last().map(String::as_str);
    match name {
        "event" if parent == Some("trace") => {
            if let Some(attrs) = event_attrs.take() {
                trace_events.push(attrs);
            }
        }
        "trace" if parent == Some("log") => {
            let Some(mut attrs) = trace_attrs.take() else {
                return Ok(());
            };
            let (_, case_id) = attrs
                .take(CONCEPT_NAME)
                .ok_or(LogError::MissingConceptName("trace"))?;
            let inherited: Vec<(String, AttrValue)> = attrs
                .raw
                .into_iter()
                .map(|(k, (kind, v))| {
                    let value = typed_value(&kind, &v);
                    (k, value)
                })
                .collect();
            let mut events = Vec::with_capacity(trace_events.len());
            for mut raw in trace_events.drain(..) {
                *event_ordinal += 1;
                let (_, activity) = raw
                    .take(CONCEPT_NAME)
                    .ok_or(LogError::MissingConceptName("event"))?;
                let stamp = raw.take(TIME_TIMESTAMP);
                let timestamp = stamp
                    .as_ref()
                    .and_then(|(_, v)| parse_timestamp(v))
                    .ok_or_else(|| LogError::UnparsableTimestamp {
                        row: *event_ordinal,
                        value: stamp.map(|(_, v)| v).unwrap_or_default(),
                    })?;
                let mut event = Event::new(case_id.clone(), activity, timestamp);
                for (key, (kind, value)) in raw.raw {
                    if is_reserved(&key) {
                        return Err(LogError::ReservedAttribute(key));
                    }
                    event.attributes.insert(key, typed_value(&kind, &value));
                }
                for (key, value) in &inherited {
                    if is_reserved(key) {
                        return Err(LogError::ReservedAttribute(key.clone()));
                    }
                    event
                        .attributes
                        .entry(key.clone())
                        .or_insert_with(|| value.clone());
                }
                events.push(event);
            }
            if let Some(trace) = Trace::new(case_id, events) {
                traces.push(trace);
            }
        }
        _ => {}
    }
    Ok(())
}

fn write_attribute<W: Write>(sink: &mut W, indent: &str, key: &str, value: &AttrValue) -> std::io::Result<()> {
    let (tag, text) = match value {
        AttrValue::Null => return Ok(()),
        AttrValue::Bool(b) => ("boolean", b.to_string()),
        AttrValue::Number(v) if v.fract() == 0.0 && v.abs() < 1e15 => ("int", format!("{}", *v as i64)),
        AttrValue::Number(v) => ("float", v.to_string()),
        AttrValue::Text(t) => ("string", t.clone()),
    };
    writeln!(sink, r#"{indent}<{tag} key="{}" value="{}"/>"#, escape(key), escape(&text))
}

/// Writes the log as XES. Attributes are written per event.
pub fn write_xes<W: Write>(log: &EventLog, mut sink: W) -> Result<(), LogError> {
    writeln!(sink, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(sink, r#"<log xes.version="1.0">"#)?;
    for trace in log.traces() {
        writeln!(sink, "  <trace>")?;
        write_attribute(&mut sink, "    ", CONCEPT_NAME, &AttrValue::Text(trace.case_id().to_string()))?;
        for event in trace.events() {
            writeln!(sink, "    <event>")?;
            write_attribute(&mut sink, "      ", CONCEPT_NAME, &AttrValue::Text(event.activity.clone()))?;
            writeln!(
                sink,
                r#"      <date key="{TIME_TIMESTAMP}" value="{}"/>"#,
                event.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true)
            )?;
            for (key, value) in &event.attributes {
                write_attribute(&mut sink, "      ", key, value)?;
            }
            writeln!(sink, "    </event>")?;
        }
        writeln!(sink, "  </trace>")?;
    }
    writeln!(sink, "</log>")?;
    Ok(())
}
