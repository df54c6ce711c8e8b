use std::collections::{BTreeMap, HashMap};

use serde::Deserialize;
use serde_json::Value;

use super::predicate::Predicate;
use super::registry::DerivedRegistry;
use super::tree::{AttrReducer, CompositionTree, MeasureKind, MeasureNode, NodeId, TimeUnit};
use super::ModelError;
use crate::admissible::SelectionStrategy;
use crate::event_log::Granularity;
use crate::mechanisms::{AggregateFn, Comparator, Mechanism, ThresholdSpec, DEFAULT_XI};

/// Mechanism parameters carried by a definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseParams {
    pub xi: u32,
    pub buckets: Option<usize>,
    pub ext_low: f64,
    pub ext_high: f64,
    /// Per-node fixed domains; nodes absent here use an estimated domain.
    pub fixed_domains: BTreeMap<NodeId, (f64, f64)>,
    pub publish_cardinality: bool,
}

impl Default for ReleaseParams {
    fn default() -> Self {
        ReleaseParams {
            xi: DEFAULT_XI,
            buckets: None,
            ext_low: 0.0,
            ext_high: 0.0,
            fixed_domains: BTreeMap::new(),
            publish_cardinality: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PpiDefinition {
    pub id: String,
    pub description: Option<String>,
    pub tree: CompositionTree,
    pub target: Option<ThresholdSpec<f64>>,
    pub scope_granularity: Granularity,
    pub epsilon: f64,
    /// Explicit per-node mechanisms from the definition.
    pub mechanisms: BTreeMap<NodeId, Mechanism>,
    pub selection: SelectionStrategy,
    pub params: ReleaseParams,
}

impl PpiDefinition {
    /// Mechanism that privatizes `node`: the explicit choice if any, else
    /// interval for min/max, Laplace for mean/sum and sample-and-aggregate
    /// for derived measures.
    pub fn mechanism_for(&self, node: NodeId) -> Mechanism {
        if let Some(m) = self.mechanisms.get(&node) {
            return *m;
        }
        match self.tree.kind(node) {
            MeasureKind::Aggregate(AggregateFn::Min | AggregateFn::Max) => Mechanism::Interval,
            MeasureKind::Aggregate(_) => Mechanism::Laplace,
            _ => Mechanism::SampleAggregate,
        }
    }

    /// Checks that `mechanism` can run on `node` under this definition.
    pub fn check_mechanism(&self, node: NodeId, mechanism: Mechanism) -> Result<(), ModelError> {
        let fail = |reason: &str| ModelError::MechanismNotApplicable {
            node: self.tree.name(node).to_string(),
            mechanism: mechanism.name().to_string(),
            reason: reason.to_string(),
        };
        match (mechanism, self.tree.kind(node)) {
            (Mechanism::Threshold, MeasureKind::Aggregate(_)) if self.target.is_none() => {
                Err(fail("the definition has no target"))
            }
            (Mechanism::Threshold, MeasureKind::Aggregate(_)) if node != self.tree.root() => {
                Err(fail("the target constrains the root measure only"))
            }
            (Mechanism::Laplace | Mechanism::Interval | Mechanism::Threshold, MeasureKind::Aggregate(_)) => {
                Ok(())
            }
            (Mechanism::SampleAggregate, MeasureKind::Derived { function, multi_instance: true }) => {
                if function.output_range().is_none() {
                    Err(fail("the derived function declares no output range"))
                } else {
                    Ok(())
                }
            }
            (Mechanism::SampleAggregate, _) => Err(fail("only multi-instance derived measures qualify")),
            _ => Err(fail("only aggregation measures qualify")),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DefinitionRepr {
    id: String,
    #[serde(default)]
    description: Option<String>,
    epsilon: f64,
    scope: Granularity,
    #[serde(default)]
    target: Option<TargetRepr>,
    #[serde(default)]
    mechanism: BTreeMap<String, Mechanism>,
    #[serde(default)]
    selection: Option<SelectionStrategy>,
    #[serde(default)]
    xi: Option<u32>,
    #[serde(default)]
    buckets: Option<usize>,
    #[serde(default)]
    ext_low: Option<f64>,
    #[serde(default)]
    ext_high: Option<f64>,
    #[serde(default)]
    domain: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    publish_cardinality: bool,
    measure: MeasureRepr,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetRepr {
    op: Comparator,
    #[serde(default)]
    bound: Option<f64>,
    #[serde(default)]
    relative_offset: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureRepr {
    #[serde(rename = "fn")]
    function: String,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    args: Option<Value>,
    #[serde(default)]
    children: Vec<MeasureRepr>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CountArgs {
    activity: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeDiffArgs {
    from: String,
    to: String,
    #[serde(default = "default_unit")]
    unit: TimeUnit,
}

fn default_unit() -> TimeUnit {
    TimeUnit::Seconds
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConditionArgs {
    predicate: Predicate,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AttrAggArgs {
    attribute: String,
    reducer: AttrReducer,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct DerivedArgs {
    #[serde(default)]
    multi_instance: Option<bool>,
}

fn syntax(e: serde_json::Error) -> ModelError {
    ModelError::SyntaxError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses one definition object.
pub fn parse_ppi_definition(source: &str, registry: &DerivedRegistry) -> Result<PpiDefinition, ModelError> {
    let repr: DefinitionRepr = serde_json::from_str(source).map_err(syntax)?;
    build(repr, registry)
}

/// Parses either a single definition object or an array of them.
pub fn parse_ppi_definitions(
    source: &str,
    registry: &DerivedRegistry,
) -> Result<Vec<PpiDefinition>, ModelError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<Value>),
        One(Value),
    }
    let values = match serde_json::from_str::<OneOrMany>(source).map_err(syntax)? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(v) => vec![v],
    };
    values
        .into_iter()
        .map(|v| serde_json::from_value::<DefinitionRepr>(v).map_err(syntax).and_then(|r| build(r, registry)))
        .collect()
}

fn build(repr: DefinitionRepr, registry: &DerivedRegistry) -> Result<PpiDefinition, ModelError> {
    if !(repr.epsilon.is_finite() && repr.epsilon > 0.0) {
        return Err(ModelError::InvalidEpsilon);
    }
    let ppi = repr.id.clone();
    let invalid = |message: &str| ModelError::InvalidArgument {
        node: ppi.clone(),
        message: message.to_string(),
    };
    if repr.scope == Granularity::Custom {
        return Err(invalid("scope must be weekly or monthly"));
    }
    let target = match repr.target {
        None => None,
        Some(TargetRepr { op, bound: Some(b), relative_offset: None }) if b.is_finite() => {
            Some(ThresholdSpec::absolute(op, b))
        }
        Some(TargetRepr { op, bound: None, relative_offset: Some(y) }) if y.is_finite() => {
            Some(ThresholdSpec::relative(op, y))
        }
        Some(_) => return Err(invalid("target needs exactly one finite `bound` or `relative_offset`")),
    };
    let xi = repr.xi.unwrap_or(DEFAULT_XI);
    if xi == 0 {
        return Err(invalid("xi must be at least 1"));
    }
    if repr.buckets.is_some_and(|m| m < 2) {
        return Err(invalid("buckets must be at least 2"));
    }
    let ext_low = repr.ext_low.unwrap_or(0.0);
    let ext_high = repr.ext_high.unwrap_or(0.0);
    if !(ext_low.is_finite() && ext_low >= 0.0 && ext_high.is_finite() && ext_high >= 0.0) {
        return Err(invalid("domain extensions must be non-negative"));
    }

    let mut counters = HashMap::new();
    let root = build_measure(repr.measure, registry, &mut counters)?;
    let tree = CompositionTree::new(root)?;

    let resolve = |name: &str| tree.lookup(name).ok_or_else(|| ModelError::UnknownNode(name.to_string()));
    let mut mechanisms = BTreeMap::new();
    for (name, mechanism) in repr.mechanism {
        mechanisms.insert(resolve(&name)?, mechanism);
    }
    let mut fixed_domains = BTreeMap::new();
    for (name, [lo, hi]) in repr.domain {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ModelError::InvalidArgument {
                node: name,
                message: "domain must satisfy lower <= upper".into(),
            });
        }
        fixed_domains.insert(resolve(&name)?, (lo, hi));
    }
    let selection = match repr.selection {
        Some(s) => s,
        None if !mechanisms.is_empty() => SelectionStrategy::Explicit,
        None => SelectionStrategy::default(),
    };
    let definition = PpiDefinition {
        id: repr.id,
        description: repr.description,
        tree,
        target,
        scope_granularity: repr.scope,
        epsilon: repr.epsilon,
        mechanisms,
        selection,
        params: ReleaseParams {
            xi,
            buckets: repr.buckets,
            ext_low,
            ext_high,
            fixed_domains,
            publish_cardinality: repr.publish_cardinality,
        },
    };
    for (&node, &mechanism) in &definition.mechanisms {
        definition.check_mechanism(node, mechanism)?;
    }
    Ok(definition)
}

fn args<T: for<'de> Deserialize<'de>>(node: &str, value: Option<Value>) -> Result<T, ModelError> {
    serde_json::from_value(value.unwrap_or(Value::Object(Default::default()))).map_err(|e| {
        ModelError::InvalidArgument {
            node: node.to_string(),
            message: e.to_string(),
        }
    })
}

fn build_measure(
    repr: MeasureRepr,
    registry: &DerivedRegistry,
    counters: &mut HashMap<String, usize>,
) -> Result<MeasureNode, ModelError> {
    let id = match repr.id {
        Some(id) => id,
        None => {
            let n = counters.entry(repr.function.clone()).or_insert(0);
            *n += 1;
            format!("{}{}", repr.function, n)
        }
    };
    let children = repr
        .children
        .into_iter()
        .map(|c| build_measure(c, registry, counters))
        .collect::<Result<Vec<_>, _>>()?;
    let kind = match repr.function.as_str() {
        "count" => {
            let a: CountArgs = args(&id, repr.args)?;
            MeasureKind::Count { activity: a.activity }
        }
        "timediff" => {
            let a: TimeDiffArgs = args(&id, repr.args)?;
            MeasureKind::TimeDiff {
                from: a.from,
                to: a.to,
                unit: a.unit,
            }
        }
        "condition" => MeasureKind::Condition(args::<ConditionArgs>(&id, repr.args)?.predicate),
        "attragg" => {
            let a: AttrAggArgs = args(&id, repr.args)?;
            MeasureKind::AttrAgg {
                attribute: a.attribute,
                reducer: a.reducer,
            }
        }
        name => match name.parse::<AggregateFn>() {
            Ok(f) => {
                args::<DerivedArgs>(&id, repr.args).and_then(|a| match a.multi_instance {
                    None => Ok(()),
                    Some(_) => Err(ModelError::InvalidArgument {
                        node: id.clone(),
                        message: "aggregations take no arguments".into(),
                    }),
                })?;
                MeasureKind::Aggregate(f)
            }
            Err(_) => {
                let function = registry
                    .get(name)
                    .ok_or_else(|| ModelError::UnknownDerivedFunction(name.to_string()))?;
                let a: DerivedArgs = args(&id, repr.args)?;
                // Without an explicit flag a derived node is multi-instance
                // exactly when its children are.
                let multi_instance = a.multi_instance.unwrap_or_else(|| {
                    !children.is_empty() && children.iter().all(|c| c.kind.is_multi_instance())
                });
                MeasureKind::Derived {
                    function,
                    multi_instance,
                }
            }
        },
    };
    Ok(MeasureNode { id, kind, children })
}
