//! Admissible sets: minimal sets of multi-instance measures whose
//! privatization covers every trace-level measure of a tree.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ppi_model::{CompositionTree, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdmissibleError {
    #[error("node {0:?} is not part of the tree")]
    NodeNotInTree(NodeId),
    #[error("the tree has no multi-instance measure")]
    NoMultiInstanceNode,
    #[error("the explicit selection {0:?} is not an admissible set")]
    ExplicitSelectionNotAdmissible(Vec<String>),
    #[error("no admissible set to select from")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Fewest nodes, ties broken by smaller total depth.
    #[default]
    #[serde(alias = "highest")]
    HighestNodes,
    /// Most nodes, ties broken by larger total depth.
    #[serde(alias = "lowest")]
    LowestNodes,
    /// The nodes named in the definition's mechanism map.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AdmissibleSet {
    nodes: BTreeSet<NodeId>,
}

impl AdmissibleSet {
    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    /// Node ids in tree order.
    pub fn names(&self, tree: &CompositionTree) -> Vec<String> {
        self.nodes.iter().map(|&n| tree.name(n).to_string()).collect()
    }

    fn total_depth(&self, tree: &CompositionTree) -> usize {
        self.nodes.iter().map(|&n| tree.depth(n)).sum()
    }
}

fn covers(tree: &CompositionTree, candidate: &BTreeSet<NodeId>) -> bool {
    let mut covered = BTreeSet::new();
    for &n in candidate {
        covered.extend(tree.descendants(n));
    }
    tree.leaves().iter().all(|l| covered.contains(l))
}

pub fn is_admissible(tree: &CompositionTree, candidate: &BTreeSet<NodeId>) -> Result<bool, AdmissibleError> {
    if let Some(&bad) = candidate.iter().find(|&&n| !tree.contains(n)) {
        return Err(AdmissibleError::NodeNotInTree(bad));
    }
    if !candidate.iter().all(|&n| tree.is_multi_instance(n)) || !covers(tree, candidate) {
        return Ok(false);
    }
    // Coverage is monotone, so checking the subsets one element smaller suffices.
    let minimal = candidate.iter().all(|n| {
        let mut smaller = candidate.clone();
        smaller.remove(n);
        !covers(tree, &smaller)
    });
    Ok(minimal)
}

/// All admissible sets, sorted.
pub fn enumerate_admissible_sets(tree: &CompositionTree) -> Result<Vec<AdmissibleSet>, AdmissibleError> {
    if tree.multi_instance_nodes().is_empty() {
        return Err(AdmissibleError::NoMultiInstanceNode);
    }
    let mut sets: Vec<AdmissibleSet> = covering_antichains(tree, tree.root())
        .into_iter()
        .map(|nodes| AdmissibleSet { nodes })
        .collect();
    sets.sort();
    Ok(sets)
}

/// Antichains of multi-instance nodes in the subtree of `node` that cover all
/// leaves below it. Every such antichain is minimal.
fn covering_antichains(tree: &CompositionTree, node: NodeId) -> Vec<BTreeSet<NodeId>> {
    let mut out = Vec::new();
    if tree.is_multi_instance(node) {
        out.push(BTreeSet::from([node]));
    }
    let children = tree.children(node);
    if children.is_empty() {
        return out;
    }
    let mut product = vec![BTreeSet::new()];
    for &c in children {
        let options = covering_antichains(tree, c);
        product = product
            .iter()
            .flat_map(|prefix| {
                options.iter().map(move |o| prefix.union(o).copied().collect::<BTreeSet<_>>())
            })
            .collect();
        if product.is_empty() {
            break;
        }
    }
    out.extend(product);
    out
}

/// Picks one of `sets` by `strategy`. `explicit` holds the definition's
/// mechanism-map nodes and is only consulted for [`SelectionStrategy::Explicit`].
pub fn select_admissible(
    tree: &CompositionTree,
    sets: &[AdmissibleSet],
    strategy: SelectionStrategy,
    explicit: Option<&BTreeSet<NodeId>>,
) -> Result<AdmissibleSet, AdmissibleError> {
    if sets.is_empty() {
        return Err(AdmissibleError::NoCandidates);
    }
    let chosen = match strategy {
        SelectionStrategy::HighestNodes => sets
            .iter()
            .min_by(|a, b| {
                (a.len(), a.total_depth(tree), a.names(tree)).cmp(&(b.len(), b.total_depth(tree), b.names(tree)))
            })
            .cloned(),
        SelectionStrategy::LowestNodes => sets
            .iter()
            .min_by(|a, b| {
                (b.len(), b.total_depth(tree), a.names(tree)).cmp(&(a.len(), a.total_depth(tree), b.names(tree)))
            })
            .cloned(),
        SelectionStrategy::Explicit => {
            let wanted = explicit.cloned().unwrap_or_default();
            let found = sets.iter().find(|s| s.nodes == wanted).cloned();
            if found.is_none() {
                let names = wanted.iter().map(|&n| tree.name(n).to_string()).collect();
                return Err(AdmissibleError::ExplicitSelectionNotAdmissible(names));
            }
            found
        }
    };
    Ok(chosen.expect("sets is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::AggregateFn;
    use crate::ppi_model::{DerivedRegistry, MeasureKind, MeasureNode};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rejection_ratio() -> CompositionTree {
        let registry = DerivedRegistry::with_builtins();
        CompositionTree::new(MeasureNode::derived(
            "r",
            registry.get("ratio_percent").unwrap(),
            true,
            vec![
                MeasureNode::aggregate("sum1", AggregateFn::Sum, MeasureNode::count("c1", "RejC")),
                MeasureNode::aggregate("sum2", AggregateFn::Sum, MeasureNode::count("c2", "RecC")),
            ],
        ))
        .unwrap()
    }

    fn set(tree: &CompositionTree, names: &[&str]) -> BTreeSet<NodeId> {
        names.iter().map(|n| tree.lookup(n).unwrap()).collect()
    }

    #[test]
    fn rejection_ratio_sets() {
        let tree = rejection_ratio();
        let sets = enumerate_admissible_sets(&tree).unwrap();
        let names: Vec<_> = sets.iter().map(|s| s.names(&tree)).collect();
        assert_eq!(names, vec![vec!["r"], vec!["sum1", "sum2"]]);
        assert!(is_admissible(&tree, &set(&tree, &["r"])).unwrap());
        assert!(is_admissible(&tree, &set(&tree, &["sum1", "sum2"])).unwrap());
        assert!(!is_admissible(&tree, &set(&tree, &["sum1"])).unwrap());
        assert!(!is_admissible(&tree, &set(&tree, &["r", "sum1", "sum2"])).unwrap());
        assert!(!is_admissible(&tree, &set(&tree, &["c1", "c2"])).unwrap());
        assert!(!is_admissible(&tree, &BTreeSet::new()).unwrap());
        assert_eq!(
            is_admissible(&tree, &BTreeSet::from([NodeId(17)])),
            Err(AdmissibleError::NodeNotInTree(NodeId(17)))
        );
    }

    #[test]
    fn selection() {
        let tree = rejection_ratio();
        let sets = enumerate_admissible_sets(&tree).unwrap();
        let high = select_admissible(&tree, &sets, SelectionStrategy::HighestNodes, None).unwrap();
        assert_eq!(high.names(&tree), ["r"]);
        let low = select_admissible(&tree, &sets, SelectionStrategy::LowestNodes, None).unwrap();
        assert_eq!(low.names(&tree), ["sum1", "sum2"]);
        let only_sum1 = set(&tree, &["sum1"]);
        assert_eq!(
            select_admissible(&tree, &sets, SelectionStrategy::Explicit, Some(&only_sum1)),
            Err(AdmissibleError::ExplicitSelectionNotAdmissible(vec!["sum1".into()]))
        );
        let both = set(&tree, &["sum1", "sum2"]);
        let explicit = select_admissible(&tree, &sets, SelectionStrategy::Explicit, Some(&both)).unwrap();
        assert_eq!(explicit.nodes(), &both);
        assert_eq!(
            select_admissible(&tree, &[], SelectionStrategy::HighestNodes, None),
            Err(AdmissibleError::NoCandidates)
        );
    }

    #[test]
    fn single_mean() {
        let tree = CompositionTree::new(MeasureNode::aggregate(
            "mean",
            AggregateFn::Mean,
            MeasureNode::count("c", "A"),
        ))
        .unwrap();
        let sets = enumerate_admissible_sets(&tree).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].names(&tree), ["mean"]);
    }

    #[test]
    fn three_levels() {
        let registry = DerivedRegistry::with_builtins();
        let tree = CompositionTree::new(MeasureNode::aggregate(
            "mean",
            AggregateFn::Mean,
            MeasureNode::derived(
                "d",
                registry.get("difference").unwrap(),
                true,
                vec![
                    MeasureNode::aggregate("s1", AggregateFn::Sum, MeasureNode::count("a", "A")),
                    MeasureNode::aggregate("s2", AggregateFn::Sum, MeasureNode::count("b", "B")),
                ],
            ),
        ))
        .unwrap();
        let names: Vec<_> = enumerate_admissible_sets(&tree)
            .unwrap()
            .iter()
            .map(|s| s.names(&tree))
            .collect();
        assert_eq!(names, vec![vec!["mean"], vec!["d"], vec!["s1", "s2"]]);
        assert_eq!(brute_force(&tree).len(), 3);
    }

    struct Gen {
        rng: ChaCha8Rng,
        registry: DerivedRegistry,
        next: usize,
        multi: usize,
    }

    impl Gen {
        fn id(&mut self, prefix: &str) -> String {
            self.next += 1;
            format!("{prefix}{}", self.next)
        }

        fn single(&mut self, depth: usize) -> MeasureNode {
            if depth > 2 || self.rng.random_bool(0.7) {
                let id = self.id("c");
                return MeasureNode::count(id, "A");
            }
            let arity = self.rng.random_range(1..=2);
            let f = self.registry.get(&format!("f{arity}")).unwrap();
            let children = (0..arity).map(|_| self.single(depth + 1)).collect();
            MeasureNode::derived(self.id("p"), f, false, children)
        }

        /// The caller has already reserved this node in `self.multi`.
        fn multi(&mut self, depth: usize) -> MeasureNode {
            let left = 10 - self.multi;
            let choice = self.rng.random_range(0..3);
            if left == 0 || depth > 4 || choice == 0 {
                let id = self.id("agg");
                let child = self.single(0);
                return MeasureNode::aggregate(id, AggregateFn::Sum, child);
            }
            if choice == 1 {
                self.multi += 1;
                let id = self.id("agg");
                let child = self.multi(depth + 1);
                return MeasureNode::aggregate(id, AggregateFn::Mean, child);
            }
            let arity = self.rng.random_range(1..=3).min(left);
            self.multi += arity;
            let f = self.registry.get(&format!("f{arity}")).unwrap();
            let id = self.id("d");
            let children = (0..arity).map(|_| self.multi(depth + 1)).collect();
            MeasureNode::derived(id, f, true, children)
        }
    }

    fn random_tree(seed: u64) -> CompositionTree {
        let mut registry = DerivedRegistry::new();
        for arity in 1..=3 {
            registry
                .register(&format!("f{arity}"), arity, |a| a.iter().sum(), None)
                .unwrap();
        }
        let mut gen = Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            registry,
            next: 0,
            multi: 1,
        };
        let root = gen.multi(0);
        CompositionTree::new(root).unwrap()
    }

    fn brute_force(tree: &CompositionTree) -> Vec<BTreeSet<NodeId>> {
        // Sets holding a single-instance node fail the first condition, so
        // subsets of the multi-instance nodes are exhaustive.
        let all = tree.multi_instance_nodes();
        (0u32..1 << all.len())
            .map(|mask| {
                all.iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &n)| n)
                    .collect::<BTreeSet<_>>()
            })
            .filter(|s| is_admissible(tree, s).unwrap())
            .collect()
    }

    proptest! {
        #[test]
        fn enumeration_matches_brute_force(seed in any::<u64>()) {
            let tree = random_tree(seed);
            prop_assert!(tree.multi_instance_nodes().len() <= 10);
            let mut expected = brute_force(&tree);
            expected.sort();
            let found: Vec<_> = enumerate_admissible_sets(&tree)
                .unwrap()
                .into_iter()
                .map(|s| s.nodes().clone())
                .collect();
            prop_assert_eq!(&found, &expected);
            for (i, a) in found.iter().enumerate() {
                for b in &found[i + 1..] {
                    prop_assert!(!a.is_subset(b) && !b.is_subset(a));
                }
                let covered: BTreeSet<NodeId> = a.iter().flat_map(|&n| tree.descendants(n)).collect();
                for leaf in tree.leaves() {
                    prop_assert!(covered.contains(&leaf));
                    prop_assert!(!matches!(tree.kind(leaf), MeasureKind::Aggregate(_)));
                }
            }
        }
    }
}
