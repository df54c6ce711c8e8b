use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::predicate::Predicate;
use super::registry::DerivedFunction;
use super::ModelError;
use crate::mechanisms::AggregateFn;

/// Index of a node inside its [`CompositionTree`]. The root is always `NodeId(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Seconds,
    Minutes,
    Hours,
    Days,
    Weeks,
}

impl TimeUnit {
    pub fn seconds(self) -> f64 {
        match self {
            TimeUnit::Seconds => 1.0,
            TimeUnit::Minutes => 60.0,
            TimeUnit::Hours => 3_600.0,
            TimeUnit::Days => 86_400.0,
            TimeUnit::Weeks => 604_800.0,
        }
    }
}

/// Reducer applied to the values of one attribute within a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrReducer {
    Sum,
    Mean,
    Min,
    Max,
    First,
    Last,
    Count,
}

#[derive(Debug, Clone)]
pub enum MeasureKind {
    /// Occurrences of an activity in a trace.
    Count { activity: String },
    /// Time from the first `from` event to the first `to` event.
    TimeDiff {
        from: String,
        to: String,
        unit: TimeUnit,
    },
    /// 1 if the predicate holds for the trace, else 0.
    Condition(Predicate),
    AttrAgg {
        attribute: String,
        reducer: AttrReducer,
    },
    Aggregate(AggregateFn),
    Derived {
        function: Arc<DerivedFunction>,
        multi_instance: bool,
    },
}

impl MeasureKind {
    pub fn is_base(&self) -> bool {
        matches!(
            self,
            MeasureKind::Count { .. }
                | MeasureKind::TimeDiff { .. }
                | MeasureKind::Condition(_)
                | MeasureKind::AttrAgg { .. }
        )
    }

    pub fn is_multi_instance(&self) -> bool {
        match self {
            MeasureKind::Aggregate(_) => true,
            MeasureKind::Derived { multi_instance, .. } => *multi_instance,
            _ => false,
        }
    }

    /// Function name as written in definitions.
    pub fn fn_name(&self) -> &str {
        match self {
            MeasureKind::Count { .. } => "count",
            MeasureKind::TimeDiff { .. } => "timediff",
            MeasureKind::Condition(_) => "condition",
            MeasureKind::AttrAgg { .. } => "attragg",
            MeasureKind::Aggregate(f) => f.name(),
            MeasureKind::Derived { function, .. } => function.name(),
        }
    }
}

/// Nested measure description from which a [`CompositionTree`] is built.
#[derive(Debug, Clone)]
pub struct MeasureNode {
    pub id: String,
    pub kind: MeasureKind,
    pub children: Vec<MeasureNode>,
}

impl MeasureNode {
    pub fn new(id: impl Into<String>, kind: MeasureKind, children: Vec<MeasureNode>) -> Self {
        MeasureNode {
            id: id.into(),
            kind,
            children,
        }
    }

    pub fn count(id: impl Into<String>, activity: impl Into<String>) -> Self {
        Self::new(
            id,
            MeasureKind::Count {
                activity: activity.into(),
            },
            vec![],
        )
    }

    pub fn time_diff(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        unit: TimeUnit,
    ) -> Self {
        Self::new(
            id,
            MeasureKind::TimeDiff {
                from: from.into(),
                to: to.into(),
                unit,
            },
            vec![],
        )
    }

    pub fn aggregate(id: impl Into<String>, f: AggregateFn, child: MeasureNode) -> Self {
        Self::new(id, MeasureKind::Aggregate(f), vec![child])
    }

    pub fn derived(
        id: impl Into<String>,
        function: Arc<DerivedFunction>,
        multi_instance: bool,
        children: Vec<MeasureNode>,
    ) -> Self {
        Self::new(
            id,
            MeasureKind::Derived {
                function,
                multi_instance,
            },
            children,
        )
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: String,
    pub kind: MeasureKind,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    pub depth: usize,
}

/// Validated measure tree stored as an arena in pre-order.
#[derive(Debug, Clone)]
pub struct CompositionTree {
    nodes: Vec<TreeNode>,
}

impl CompositionTree {
    pub fn new(root: MeasureNode) -> Result<Self, ModelError> {
        let mut tree = CompositionTree { nodes: Vec::new() };
        let mut seen = HashSet::new();
        tree.insert(root, None, 0, &mut seen)?;
        tree.validate()?;
        Ok(tree)
    }

    fn insert(
        &mut self,
        node: MeasureNode,
        parent: Option<NodeId>,
        depth: usize,
        seen: &mut HashSet<String>,
    ) -> Result<NodeId, ModelError> {
        if !seen.insert(node.id.clone()) {
            return Err(ModelError::DuplicateNodeId(node.id));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(TreeNode {
            id: node.id,
            kind: node.kind,
            children: Vec::new(),
            parent,
            depth,
        });
        for child in node.children {
            let child_id = self.insert(child, Some(id), depth + 1, seen)?;
            self.nodes[id.0].children.push(child_id);
        }
        Ok(id)
    }

    fn validate(&self) -> Result<(), ModelError> {
        for node in &self.nodes {
            let found = node.children.len();
            let expected = match &node.kind {
                k if k.is_base() => 0,
                MeasureKind::Aggregate(_) => 1,
                MeasureKind::Derived { function, .. } => function.arity(),
                _ => unreachable!(),
            };
            if found != expected {
                return Err(ModelError::ArityMismatch {
                    node: node.id.clone(),
                    expected,
                    found,
                });
            }
            let invalid = |reason: &str| ModelError::InvalidComposition {
                node: node.id.clone(),
                reason: reason.to_string(),
            };
            let children_multi: Vec<bool> = node
                .children
                .iter()
                .map(|c| self.nodes[c.0].kind.is_multi_instance())
                .collect();
            match &node.kind {
                MeasureKind::Derived {
                    multi_instance: true,
                    ..
                } if children_multi.iter().any(|m| !m) => {
                    return Err(invalid(
                        "a multi-instance derived measure combines multi-instance results",
                    ));
                }
                MeasureKind::Derived {
                    multi_instance: false,
                    ..
                } if children_multi.iter().any(|m| *m) => {
                    return Err(invalid(
                        "a single-instance derived measure cannot consume multi-instance results",
                    ));
                }
                _ => {}
            }
        }
        if !self.nodes[0].kind.is_multi_instance() {
            return Err(ModelError::InvalidComposition {
                node: self.nodes[0].id.clone(),
                reason: "the root must be a multi-instance measure".into(),
            });
        }
        Ok(())
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id.0]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 < self.nodes.len()
    }

    pub fn lookup(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.id == name).map(NodeId)
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].id
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn kind(&self, id: NodeId) -> &MeasureKind {
        &self.nodes[id.0].kind
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.nodes[id.0].depth
    }

    pub fn is_multi_instance(&self, id: NodeId) -> bool {
        self.nodes[id.0].kind.is_multi_instance()
    }

    /// Transitive children of `id`, excluding `id` itself.
    pub fn descendants(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<NodeId> = self.children(id).to_vec();
        while let Some(n) = stack.pop() {
            if out.insert(n) {
                stack.extend_from_slice(self.children(n));
            }
        }
        out
    }

    pub fn multi_instance_nodes(&self) -> Vec<NodeId> {
        self.ids().filter(|&n| self.is_multi_instance(n)).collect()
    }

    /// Nodes without children: the trace-level measures.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.ids().filter(|&n| self.children(n).is_empty()).collect()
    }
}

impl fmt::Display for CompositionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for node in &self.nodes {
            writeln!(
                f,
                "{:indent$}{} [{}]",
                "",
                node.id,
                node.kind.fn_name(),
                indent = node.depth * 2
            )?;
        }
        Ok(())
    }
}
