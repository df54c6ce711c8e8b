use std::collections::BTreeSet;

use thiserror::Error;

use super::audit::NodeRelease;
use super::epsilon::EpsilonSplit;
use super::CheckpointError;
use crate::admissible::{enumerate_admissible_sets, select_admissible, AdmissibleError, AdmissibleSet};
use crate::event_log::Trace;
use crate::mechanisms::{
    default_bucket_count, estimate_domain, interval_release, laplace_aggregate_release,
    sample_aggregate_release, DomainEstimate, DomainMode, Mechanism, MechanismConfig, MechanismError, ReleaseRng,
};
use crate::ppi_model::{
    collect_dataset, evaluate_node_plain, evaluate_with, EvalError, MeasureKind, ModelError, NodeId, PpiDefinition,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReleaseError {
    #[error(transparent)]
    Admissible(#[from] AdmissibleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error("mechanism at `{node}` failed: {error}")]
    Mechanism { node: String, error: MechanismError },
    #[error(transparent)]
    Split(#[from] CheckpointError),
}

/// Outcome of privatizing one PPI over a fixed trace set.
#[derive(Debug, Clone, PartialEq)]
pub struct PpiRelease {
    pub value: f64,
    pub admissible: AdmissibleSet,
    pub split: EpsilonSplit,
    pub nodes: Vec<NodeRelease>,
    pub deviations: Vec<String>,
}

impl PpiRelease {
    pub fn domain_mode(&self) -> DomainMode {
        if self.nodes.iter().any(|n| n.domain_mode == DomainMode::Estimated) {
            DomainMode::Estimated
        } else {
            DomainMode::Fixed
        }
    }
}

/// Admissible set the definition's strategy selects.
pub fn resolve_admissible(definition: &PpiDefinition) -> Result<AdmissibleSet, AdmissibleError> {
    let sets = enumerate_admissible_sets(&definition.tree)?;
    let explicit: BTreeSet<NodeId> = definition.mechanisms.keys().copied().collect();
    select_admissible(&definition.tree, &sets, definition.selection, Some(&explicit))
}

/// Privatizes every node of the selected admissible set with its own share of
/// `epsilon` and evaluates the rest of the tree on the noisy intermediates.
pub fn release_ppi(
    definition: &PpiDefinition,
    traces: &[&Trace],
    epsilon: f64,
    n_max: u32,
    rng: &mut ReleaseRng,
) -> Result<PpiRelease, ReleaseError> {
    let admissible = resolve_admissible(definition)?;
    for &node in admissible.nodes() {
        definition.check_mechanism(node, definition.mechanism_for(node))?;
    }
    let split = EpsilonSplit::new(epsilon, admissible.len(), n_max)?;
    let mut nodes = Vec::new();
    let mut deviations = Vec::new();
    let tree = &definition.tree;

    let mut intercept = |node: NodeId, traces: &[&Trace]| -> Option<Result<f64, ReleaseError>> {
        if !admissible.contains(node) {
            return None;
        }
        Some(privatize(definition, node, traces, split.per_node, rng, &mut nodes, &mut deviations))
    };
    let mut value = evaluate_with(tree, tree.root(), traces, &mut intercept)?;
    // Noisy operands can push a derived root outside its declared range;
    // clamping is post-processing and costs no budget.
    if let MeasureKind::Derived { function, .. } = tree.kind(tree.root()) {
        if let Some((lo, hi)) = function.output_range() {
            value = value.clamp(lo, hi);
        }
    }
    Ok(PpiRelease {
        value,
        admissible,
        split,
        nodes,
        deviations,
    })
}

fn privatize(
    definition: &PpiDefinition,
    node: NodeId,
    traces: &[&Trace],
    epsilon: f64,
    rng: &mut ReleaseRng,
    nodes: &mut Vec<NodeRelease>,
    deviations: &mut Vec<String>,
) -> Result<f64, ReleaseError> {
    let tree = &definition.tree;
    let name = tree.name(node).to_string();
    let params = &definition.params;
    let mechanism = definition.mechanism_for(node);
    let failed = |error: MechanismError| ReleaseError::Mechanism {
        node: name.clone(),
        error,
    };

    let (value, domain_mode, cardinality) = match (mechanism, tree.kind(node)) {
        (Mechanism::SampleAggregate, MeasureKind::Derived { function, .. }) => {
            let buckets = params.buckets.unwrap_or_else(|| default_bucket_count(traces.len()));
            let outcome = sample_aggregate_release(
                traces,
                buckets,
                epsilon,
                function.output_range(),
                |bucket: &[&&Trace]| {
                    let bucket: Vec<&Trace> = bucket.iter().map(|t| **t).collect();
                    evaluate_node_plain(tree, node, &bucket).ok()
                },
                rng,
            )
            .map_err(failed)?;
            if outcome.failed_buckets > 0 {
                deviations.push(format!(
                    "{name}: {} of {} buckets yielded no value and used the range midpoint",
                    outcome.failed_buckets, outcome.buckets
                ));
            }
            (outcome.value, DomainMode::Fixed, traces.len())
        }
        (_, MeasureKind::Aggregate(f)) => {
            let data = collect_dataset(tree, node, traces)?;
            let domain = match params.fixed_domains.get(&node) {
                Some(&(lo, hi)) => DomainEstimate::new(lo, hi, params.ext_low, params.ext_high, DomainMode::Fixed),
                None => estimate_domain(&data, params.ext_low, params.ext_high),
            }
            .map_err(failed)?;
            let (value, generalized) = if mechanism == Mechanism::Laplace {
                let out = laplace_aggregate_release(*f, &data, epsilon, &domain, rng).map_err(failed)?;
                (out.value, out.sum_sensitivity_generalized)
            } else {
                let config = MechanismConfig::new(epsilon)
                    .and_then(|c| c.with_xi(params.xi))
                    .map_err(failed)?;
                let threshold = match mechanism {
                    Mechanism::Threshold => definition.target.as_ref(),
                    _ => None,
                };
                let out = interval_release(*f, &data, &config, &domain, threshold, rng).map_err(failed)?;
                if out.degenerate {
                    deviations.push(format!("{name}: degenerate range, exact value released"));
                }
                (out.value, out.sum_sensitivity_generalized)
            };
            if generalized {
                deviations.push(format!(
                    "{name}: sum sensitivity generalized to max(|lo|, |hi|) for a domain with negative values"
                ));
            }
            (value, domain.mode, data.len())
        }
        _ => unreachable!("check_mechanism accepted the pairing"),
    };
    nodes.push(NodeRelease {
        node: name,
        mechanism,
        epsilon,
        domain_mode,
        cardinality: params.publish_cardinality.then_some(cardinality),
    });
    Ok(value)
}
