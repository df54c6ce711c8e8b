use thiserror::Error;

use super::tree::{AttrReducer, CompositionTree, MeasureKind, NodeId};
use crate::event_log::{Dataset, Trace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("activity `{activity}` required by `{node}` does not occur in the trace")]
    ActivityAbsent { node: String, activity: String },
    #[error("attribute `{attribute}` required by `{node}` is absent from the trace")]
    AttributeAbsent { node: String, attribute: String },
    #[error("no trace in scope yields a value for `{node}`")]
    EmptyDataset { node: String },
    #[error("`{0}` is not a base measure")]
    NotBase(String),
    #[error("`{0}` is multi-instance and cannot be evaluated on one trace")]
    NotSingleInstance(String),
    #[error("`{0}` is not an aggregation and has no input dataset")]
    NotAggregation(String),
}

/// Evaluates a base measure on one trace.
pub fn evaluate_base(tree: &CompositionTree, node: NodeId, trace: &Trace) -> Result<f64, EvalError> {
    let name = || tree.name(node).to_string();
    match tree.kind(node) {
        MeasureKind::Count { activity } => Ok(trace.count_of(activity) as f64),
        MeasureKind::TimeDiff { from, to, unit } => {
            let first = |activity: &String| {
                trace.first_of(activity).ok_or_else(|| EvalError::ActivityAbsent {
                    node: name(),
                    activity: activity.clone(),
                })
            };
            let (a, b) = (first(from)?, first(to)?);
            let millis = (b.timestamp - a.timestamp).num_milliseconds() as f64;
            Ok(millis / 1000.0 / unit.seconds())
        }
        MeasureKind::Condition(predicate) => Ok(if predicate.holds(trace) { 1.0 } else { 0.0 }),
        MeasureKind::AttrAgg { attribute, reducer } => {
            let present: Vec<_> = trace
                .events()
                .iter()
                .filter_map(|e| e.attribute(attribute))
                .filter(|v| !v.is_null())
                .collect();
            if *reducer == AttrReducer::Count {
                return Ok(present.len() as f64);
            }
            let values: Vec<f64> = present.iter().filter_map(|v| v.as_number()).collect();
            let absent = || EvalError::AttributeAbsent {
                node: name(),
                attribute: attribute.clone(),
            };
            let (first, last) = (values.first().copied(), values.last().copied());
            let value = match reducer {
                AttrReducer::Sum => (!values.is_empty()).then(|| values.iter().sum()),
                AttrReducer::Mean => (!values.is_empty())
                    .then(|| values.iter().sum::<f64>() / values.len() as f64),
                AttrReducer::Min => values.iter().copied().reduce(f64::min),
                AttrReducer::Max => values.iter().copied().reduce(f64::max),
                AttrReducer::First => first,
                AttrReducer::Last => last,
                AttrReducer::Count => unreachable!(),
            };
            value.ok_or_else(absent)
        }
        _ => Err(EvalError::NotBase(name())),
    }
}

/// Evaluates a single-instance node (a base measure or a per-trace derived
/// measure) on one trace.
pub fn evaluate_single(tree: &CompositionTree, node: NodeId, trace: &Trace) -> Result<f64, EvalError> {
    match tree.kind(node) {
        k if k.is_base() => evaluate_base(tree, node, trace),
        MeasureKind::Derived {
            function,
            multi_instance: false,
        } => {
            let args = tree
                .children(node)
                .iter()
                .map(|&c| evaluate_single(tree, c, trace))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(function.call(&args))
        }
        _ => Err(EvalError::NotSingleInstance(tree.name(node).to_string())),
    }
}

/// Input dataset of an aggregation node over the given traces. Traces for
/// which the child is undefined (absent activity or attribute) are skipped.
pub fn collect_dataset(
    tree: &CompositionTree,
    node: NodeId,
    traces: &[&Trace],
) -> Result<Dataset<f64>, EvalError> {
    let mut plain = |_: NodeId, _: &[&Trace]| None;
    collect_with(tree, node, traces, &mut plain)
}

fn collect_with<E, F>(
    tree: &CompositionTree,
    node: NodeId,
    traces: &[&Trace],
    intercept: &mut F,
) -> Result<Dataset<f64>, E>
where
    E: From<EvalError>,
    F: FnMut(NodeId, &[&Trace]) -> Option<Result<f64, E>>,
{
    let MeasureKind::Aggregate(_) = tree.kind(node) else {
        return Err(EvalError::NotAggregation(tree.name(node).to_string()).into());
    };
    let child = tree.children(node)[0];
    if tree.is_multi_instance(child) {
        let value = evaluate_with(tree, child, traces, intercept)?;
        return Ok(Dataset::new(vec![value]));
    }
    let mut values = Vec::with_capacity(traces.len());
    for trace in traces {
        match evaluate_single(tree, child, trace) {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) | Err(EvalError::ActivityAbsent { .. }) | Err(EvalError::AttributeAbsent { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Dataset::new(values))
}

/// Evaluates a multi-instance node over a set of traces. `intercept` is
/// consulted first at every multi-instance node; returning `Some` replaces the
/// plain result (e.g. with a privatized one) and downstream nodes consume it.
pub fn evaluate_with<E, F>(
    tree: &CompositionTree,
    node: NodeId,
    traces: &[&Trace],
    intercept: &mut F,
) -> Result<f64, E>
where
    E: From<EvalError>,
    F: FnMut(NodeId, &[&Trace]) -> Option<Result<f64, E>>,
{
    if !tree.is_multi_instance(node) {
        return Err(EvalError::NotAggregation(tree.name(node).to_string()).into());
    }
    if let Some(result) = intercept(node, traces) {
        return result;
    }
    match tree.kind(node) {
        MeasureKind::Aggregate(f) => {
            let data = collect_with(tree, node, traces, intercept)?;
            f.apply(data.values()).ok_or_else(|| {
                EvalError::EmptyDataset {
                    node: tree.name(node).to_string(),
                }
                .into()
            })
        }
        MeasureKind::Derived { function, .. } => {
            let mut args = Vec::with_capacity(tree.children(node).len());
            for &c in tree.children(node) {
                args.push(evaluate_with(tree, c, traces, intercept)?);
            }
            Ok(function.call(&args))
        }
        _ => unreachable!("only aggregations and derived measures are multi-instance"),
    }
}

pub fn evaluate_node_plain(
    tree: &CompositionTree,
    node: NodeId,
    traces: &[&Trace],
) -> Result<f64, EvalError> {
    let mut plain = |_: NodeId, _: &[&Trace]| None;
    evaluate_with(tree, node, traces, &mut plain)
}

/// Noise-free value of the whole PPI.
pub fn evaluate_plain(tree: &CompositionTree, traces: &[&Trace]) -> Result<f64, EvalError> {
    evaluate_node_plain(tree, tree.root(), traces)
}
