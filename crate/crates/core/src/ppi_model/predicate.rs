use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::tree::TimeUnit;
use crate::event_log::{AttrValue, Trace};
use crate::mechanisms::Comparator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttrOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

/// Boolean condition over a single trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Always,
    /// The activity occurs at least once.
    Occurs(String),
    /// Compares the first non-null value of `name` in the trace.
    /// False when no event carries the attribute.
    Attr {
        name: String,
        op: AttrOp,
        value: AttrValue,
    },
    /// Elapsed time between the first `from` and the first `to` event,
    /// compared against `bound`. False when either activity is absent.
    Within {
        from: String,
        to: String,
        op: Comparator,
        bound: f64,
        unit: TimeUnit,
    },
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn holds(&self, trace: &Trace) -> bool {
        match self {
            Predicate::Always => true,
            Predicate::Occurs(activity) => trace.first_of(activity).is_some(),
            Predicate::Attr { name, op, value } => trace
                .events()
                .iter()
                .filter_map(|e| e.attribute(name))
                .find(|v| !v.is_null())
                .is_some_and(|actual| compare(actual, *op, value)),
            Predicate::Within {
                from,
                to,
                op,
                bound,
                unit,
            } => match (trace.first_of(from), trace.first_of(to)) {
                (Some(a), Some(b)) => {
                    let elapsed =
                        (b.timestamp - a.timestamp).num_milliseconds() as f64 / 1000.0 / unit.seconds();
                    op.holds(elapsed, *bound)
                }
                _ => false,
            },
            Predicate::And(parts) => parts.iter().all(|p| p.holds(trace)),
            Predicate::Or(parts) => parts.iter().any(|p| p.holds(trace)),
            Predicate::Not(inner) => !inner.holds(trace),
        }
    }
}

fn compare(actual: &AttrValue, op: AttrOp, expected: &AttrValue) -> bool {
    let ordering = match (actual, expected) {
        (AttrValue::Number(a), AttrValue::Number(b)) => a.partial_cmp(b),
        (AttrValue::Text(a), AttrValue::Text(b)) => Some(a.cmp(b)),
        (AttrValue::Bool(a), AttrValue::Bool(b)) => match op {
            AttrOp::Eq | AttrOp::Ne => Some(a.cmp(b)),
            _ => None,
        },
        _ => None,
    };
    let Some(ord) = ordering else {
        return op == AttrOp::Ne;
    };
    match op {
        AttrOp::Eq => ord == Ordering::Equal,
        AttrOp::Ne => ord != Ordering::Equal,
        AttrOp::Lt => ord == Ordering::Less,
        AttrOp::Le => ord != Ordering::Greater,
        AttrOp::Gt => ord == Ordering::Greater,
        AttrOp::Ge => ord != Ordering::Less,
    }
}
