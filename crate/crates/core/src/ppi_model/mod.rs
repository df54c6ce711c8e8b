//! PPIs as function composition trees of base, aggregation and derived
//! measures, their JSON definition format and their plain (noise-free)
//! evaluation.

mod definition;
mod eval;
mod predicate;
mod registry;
mod tree;

use thiserror::Error;

pub use definition::{parse_ppi_definition, parse_ppi_definitions, PpiDefinition, ReleaseParams};
pub use eval::{
    collect_dataset, evaluate_base, evaluate_node_plain, evaluate_plain, evaluate_single,
    evaluate_with, EvalError,
};
pub use predicate::{AttrOp, Predicate};
pub use registry::{DerivedFunction, DerivedRegistry};
pub use tree::{AttrReducer, CompositionTree, MeasureKind, MeasureNode, NodeId, TimeUnit, TreeNode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    SyntaxError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown derived function `{0}`")]
    UnknownDerivedFunction(String),
    #[error("node `{node}` expects {expected} children, found {found}")]
    ArityMismatch {
        node: String,
        expected: usize,
        found: usize,
    },
    #[error("epsilon must be a positive finite number")]
    InvalidEpsilon,
    #[error("duplicate node id `{0}`")]
    DuplicateNodeId(String),
    #[error("derived function `{0}` is already registered")]
    DuplicateName(String),
    #[error("invalid composition at `{node}`: {reason}")]
    InvalidComposition { node: String, reason: String },
    #[error("invalid arguments for `{node}`: {message}")]
    InvalidArgument { node: String, message: String },
    #[error("mechanism map refers to unknown node `{0}`")]
    UnknownNode(String),
    #[error("mechanism `{mechanism}` cannot privatize `{node}`: {reason}")]
    MechanismNotApplicable {
        node: String,
        mechanism: String,
        reason: String,
    },
}
