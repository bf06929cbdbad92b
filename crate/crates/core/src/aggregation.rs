//! Virtual units, grouping by power-to-energy ratio and the aggregator tree.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pte_ratio, EssParams, Timeseries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    AllInOne,
    /// Similar PtE ratios share a group.
    Homogeneous,
    /// Each group gets a spread of PtE ratios.
    Heterogeneous,
}

/// Combines several units into one virtual unit.
///
/// Powers and capacities add up. SoC and efficiencies are capacity-weighted
/// means, so the stored energy of the virtual unit equals the children's sum.
pub fn aggregate(id: impl Into<String>, children: &[EssParams]) -> Result<EssParams> {
    if children.is_empty() {
        return Err(Error::Invalid("cannot aggregate an empty set of units".into()));
    }
    if children.len() == 1 {
        return Ok(EssParams {
            id: id.into(),
            ..children[0].clone()
        });
    }
    let capacity: f64 = children.iter().map(|c| c.capacity).sum();
    let weighted = |f: fn(&EssParams) -> f64| {
        children.iter().map(|c| f(c) * c.capacity).sum::<f64>() / capacity
    };
    Ok(EssParams {
        id: id.into(),
        p_max: children.iter().map(|c| c.p_max).sum(),
        capacity,
        eta_chg: weighted(|c| c.eta_chg).min(1.0),
        eta_dch: weighted(|c| c.eta_dch).min(1.0),
        soc_initial: weighted(|c| c.soc_initial).clamp(0.0, 1.0),
    })
}

/// Splits units into groups; each group lists indices into `units`.
///
/// A single group keeps the input order. Otherwise units are ordered by
/// ascending PtE ratio (ties by id). Homogeneous takes
/// contiguous runs of that order, Heterogeneous deals it round-robin. Group
/// sizes differ by at most one, larger groups first.
pub fn partition(
    units: &[EssParams],
    mode: AggregationMode,
    group_count: usize,
) -> Result<Vec<Vec<usize>>> {
    if group_count == 0 || group_count > units.len() {
        return Err(Error::Invalid(format!(
            "group_count must lie in 1..={}, got {group_count}",
            units.len()
        )));
    }
    if mode == AggregationMode::AllInOne || group_count == 1 {
        return Ok(vec![(0..units.len()).collect()]);
    }
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by(|&a, &b| {
        pte_ratio(&units[a])
            .total_cmp(&pte_ratio(&units[b]))
            .then_with(|| units[a].id.cmp(&units[b].id))
    });
    let mut groups = vec![Vec::new(); group_count];
    match mode {
        AggregationMode::Homogeneous => {
            let base = units.len() / group_count;
            let extra = units.len() % group_count;
            let mut it = order.into_iter();
            for (g, group) in groups.iter_mut().enumerate() {
                let size = base + usize::from(g < extra);
                group.extend(it.by_ref().take(size));
            }
        }
        AggregationMode::Heterogeneous => {
            for (pos, i) in order.into_iter().enumerate() {
                groups[pos % group_count].push(i);
            }
        }
        AggregationMode::AllInOne => unreachable!(),
    }
    Ok(groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Child {
    /// Index into [`AggregatorTree::units`].
    Unit(usize),
    /// Index into [`AggregatorTree::nodes`].
    Node(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorNode {
    pub id: String,
    pub children: Vec<Child>,
    pub virtual_params: EssParams,
    /// Upper bound on the summed net power of this node.
    pub ipf_constraint: Option<Timeseries>,
}

/// Explicit node definition; children name units or other nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub children: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorTree {
    units: Vec<EssParams>,
    nodes: Vec<AggregatorNode>,
    root: usize,
}

pub const ROOT_ID: &str = "root";

impl AggregatorTree {
    pub fn units(&self) -> &[EssParams] {
        &self.units
    }

    pub fn nodes(&self) -> &[AggregatorNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &AggregatorNode {
        &self.nodes[i]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn root_node(&self) -> &AggregatorNode {
        &self.nodes[self.root]
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn child_params(&self, child: Child) -> &EssParams {
        match child {
            Child::Unit(u) => &self.units[u],
            Child::Node(n) => &self.nodes[n].virtual_params,
        }
    }

    /// Parameters a node sees when planning: virtual units for child nodes.
    pub fn children_params(&self, node: usize) -> Vec<EssParams> {
        self.nodes[node]
            .children
            .iter()
            .map(|&c| self.child_params(c).clone())
            .collect()
    }

    /// Every leaf unit below `node`, ascending.
    pub fn leaf_units(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            for &c in &self.nodes[n].children {
                match c {
                    Child::Unit(u) => out.push(u),
                    Child::Node(m) => stack.push(m),
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// True if every child is a unit, so planned and delivered coincide.
    pub fn is_leaf_level(&self, node: usize) -> bool {
        self.nodes[node]
            .children
            .iter()
            .all(|c| matches!(c, Child::Unit(_)))
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &AggregatorTree, n: usize) -> usize {
            1 + t.nodes[n]
                .children
                .iter()
                .filter_map(|c| match c {
                    Child::Node(m) => Some(walk(t, *m)),
                    Child::Unit(_) => None,
                })
                .max()
                .unwrap_or(0)
        }
        walk(self, self.root)
    }

    pub fn set_constraint(&mut self, node_id: &str, bound: Timeseries) -> Result<()> {
        let i = self
            .find(node_id)
            .ok_or_else(|| Error::Invalid(format!("ipf constraint names unknown node '{node_id}'")))?;
        self.nodes[i].ipf_constraint = Some(bound);
        Ok(())
    }

    /// Builds the tree from explicit node definitions. The root is the only
    /// node that is nobody's child.
    pub fn from_specs(units: Vec<EssParams>, specs: &[NodeSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Invalid("hierarchy needs at least one node".into()));
        }
        let unit_ix: BTreeMap<&str, usize> =
            units.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
        if unit_ix.len() != units.len() {
            return Err(Error::Invalid("unit ids must be unique".into()));
        }
        let node_ix: BTreeMap<&str, usize> =
            specs.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        if node_ix.len() != specs.len() {
            return Err(Error::Invalid("node ids must be unique".into()));
        }
        if let Some(id) = node_ix.keys().find(|id| unit_ix.contains_key(*id)) {
            return Err(Error::Invalid(format!("'{id}' is used both as unit and node id")));
        }

        let mut seen_units = vec![false; units.len()];
        let mut has_parent = vec![false; specs.len()];
        let mut children = Vec::with_capacity(specs.len());
        for spec in specs {
            if spec.children.is_empty() {
                return Err(Error::Invalid(format!("node '{}' has no children", spec.id)));
            }
            let mut list = Vec::with_capacity(spec.children.len());
            for name in &spec.children {
                let child = if let Some(&u) = unit_ix.get(name.as_str()) {
                    if std::mem::replace(&mut seen_units[u], true) {
                        return Err(Error::Invalid(format!("unit '{name}' appears in more than one node")));
                    }
                    Child::Unit(u)
                } else if let Some(&n) = node_ix.get(name.as_str()) {
                    if std::mem::replace(&mut has_parent[n], true) {
                        return Err(Error::Invalid(format!("node '{name}' has more than one parent")));
                    }
                    Child::Node(n)
                } else {
                    return Err(Error::Invalid(format!(
                        "node '{}' references unknown child '{name}'",
                        spec.id
                    )));
                };
                list.push(child);
            }
            children.push(list);
        }
        if let Some(u) = seen_units.iter().position(|s| !s) {
            return Err(Error::Invalid(format!(
                "unit '{}' is not assigned to any node",
                units[u].id
            )));
        }
        let roots: Vec<usize> = (0..specs.len()).filter(|&i| !has_parent[i]).collect();
        let [root] = roots[..] else {
            return Err(Error::Invalid(format!(
                "hierarchy must have exactly one root, found {}",
                roots.len()
            )));
        };

        // Post-order from the root; nodes not reached sit on a cycle.
        let mut order = Vec::with_capacity(specs.len());
        let mut stack = vec![(root, false)];
        while let Some((n, expanded)) = stack.pop() {
            if expanded {
                order.push(n);
                continue;
            }
            stack.push((n, true));
            for c in children[n].iter().rev() {
                if let Child::Node(m) = c {
                    stack.push((*m, false));
                }
            }
        }
        if order.len() != specs.len() {
            return Err(Error::Invalid("hierarchy contains a cycle".into()));
        }

        let mut virtual_params: Vec<Option<EssParams>> = vec![None; specs.len()];
        for &n in &order {
            let params: Vec<EssParams> = children[n]
                .iter()
                .map(|c| match c {
                    Child::Unit(u) => units[*u].clone(),
                    Child::Node(m) => virtual_params[*m].clone().expect("post-order"),
                })
                .collect();
            virtual_params[n] = Some(aggregate(specs[n].id.clone(), &params)?);
        }
        let nodes = specs
            .iter()
            .zip(children)
            .zip(virtual_params)
            .map(|((spec, children), vp)| AggregatorNode {
                id: spec.id.clone(),
                children,
                virtual_params: vp.expect("every node visited"),
                ipf_constraint: None,
            })
            .collect();
        Ok(Self { units, nodes, root })
    }

    /// Node definitions equivalent to this tree, for manifests.
    pub fn to_specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id.clone(),
                children: n
                    .children
                    .iter()
                    .map(|&c| match c {
                        Child::Unit(u) => self.units[u].id.clone(),
                        Child::Node(m) => self.nodes[m].id.clone(),
                    })
                    .collect(),
            })
            .collect()
    }
}

/// Builds a tree over `groups` (indices into `units`).
///
/// One group yields a root directly over the units. Otherwise each group
/// becomes node `g1..gN`; `nesting` lists fanouts applied bottom-up, so
/// `[2]` over four groups adds mid-level nodes `l1_1, l1_2` below the root.
pub fn build_tree(
    units: Vec<EssParams>,
    groups: &[Vec<usize>],
    nesting: &[usize],
) -> Result<AggregatorTree> {
    if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
        return Err(Error::Invalid("partition must contain nonempty groups".into()));
    }
    let mut covered = BTreeSet::new();
    for &i in groups.iter().flatten() {
        if i >= units.len() || !covered.insert(i) {
            return Err(Error::Invalid(format!("group member {i} is out of range or repeated")));
        }
    }
    if covered.len() != units.len() {
        return Err(Error::Invalid("groups must cover every unit".into()));
    }
    let unit_ids = |g: &Vec<usize>| g.iter().map(|&i| units[i].id.clone()).collect::<Vec<_>>();

    let mut specs = Vec::new();
    if groups.len() == 1 {
        specs.push(NodeSpec {
            id: ROOT_ID.into(),
            children: unit_ids(&groups[0]),
        });
        return AggregatorTree::from_specs(units, &specs);
    }
    let mut level: Vec<String> = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        let id = format!("g{}", g + 1);
        specs.push(NodeSpec {
            id: id.clone(),
            children: unit_ids(group),
        });
        level.push(id);
    }
    for (depth, &fanout) in nesting.iter().enumerate() {
        if fanout < 2 {
            return Err(Error::Invalid("nesting fanout must be at least 2".into()));
        }
        if level.len() <= fanout {
            break;
        }
        let mut next = Vec::new();
        for (j, chunk) in level.chunks(fanout).enumerate() {
            let id = format!("l{}_{}", depth + 1, j + 1);
            specs.push(NodeSpec {
                id: id.clone(),
                children: chunk.to_vec(),
            });
            next.push(id);
        }
        level = next;
    }
    specs.push(NodeSpec {
        id: ROOT_ID.into(),
        children: level,
    });
    AggregatorTree::from_specs(units, &specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hi(id: &str) -> EssParams {
        EssParams::ideal(id, 1.3, 0.4, 0.5)
    }

    fn lo(id: &str) -> EssParams {
        EssParams::ideal(id, 0.7, 1.6, 0.5)
    }

    fn ids(units: &[EssParams], groups: &[Vec<usize>]) -> Vec<Vec<String>> {
        groups
            .iter()
            .map(|g| g.iter().map(|&i| units[i].id.clone()).collect())
            .collect()
    }

    #[test]
    fn mixed_group_totals() {
        let v = aggregate("g", &[hi("a"), lo("b")]).unwrap();
        assert!((v.p_max - 2.0).abs() < 1e-15);
        assert!((v.capacity - 2.0).abs() < 1e-15);
        assert_eq!(v.soc_initial, 0.5);
    }

    #[test]
    fn soc_is_capacity_weighted() {
        let a = EssParams::ideal("a", 1.0, 1.0, 1.0);
        let b = EssParams::ideal("b", 1.0, 1.0, 0.0);
        assert_eq!(aggregate("v", &[a.clone(), b]).unwrap().soc_initial, 0.5);
        let single = aggregate("v", std::slice::from_ref(&a)).unwrap();
        assert_eq!(EssParams { id: "a".into(), ..single }, a);
        assert!(aggregate("v", &[]).is_err());
    }

    #[test]
    fn efficiencies_are_capacity_weighted() {
        let a = EssParams {
            eta_chg: 0.8,
            ..EssParams::ideal("a", 1.0, 3.0, 0.5)
        };
        let b = EssParams::ideal("b", 1.0, 1.0, 0.5);
        let v = aggregate("v", &[a, b]).unwrap();
        assert!((v.eta_chg - 0.85).abs() < 1e-15);
        assert_eq!(v.eta_dch, 1.0);
    }

    #[test]
    fn table_partitions() {
        let units = vec![hi("fpu1"), lo("fpu2"), hi("fpu3"), lo("fpu4")];
        let het = partition(&units, AggregationMode::Heterogeneous, 2).unwrap();
        assert_eq!(ids(&units, &het), vec![vec!["fpu2", "fpu1"], vec!["fpu4", "fpu3"]]);
        let hom = partition(&units, AggregationMode::Homogeneous, 2).unwrap();
        assert_eq!(ids(&units, &hom), vec![vec!["fpu2", "fpu4"], vec!["fpu1", "fpu3"]]);
        let one = partition(&units, AggregationMode::Heterogeneous, 1).unwrap();
        assert_eq!(one, partition(&units, AggregationMode::AllInOne, 3).unwrap());
        assert!(partition(&units, AggregationMode::Homogeneous, 5).is_err());
        assert!(partition(&units, AggregationMode::Homogeneous, 0).is_err());
    }

    #[test]
    fn remainder_goes_to_earlier_groups() {
        let units: Vec<_> = (0..5).map(|i| EssParams::ideal(format!("u{i}"), 1.0 + i as f64, 1.0, 0.5)).collect();
        let g = partition(&units, AggregationMode::Homogeneous, 2).unwrap();
        assert_eq!(g.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2]);
    }

    #[test]
    fn two_level_tree() {
        let units = vec![hi("a"), lo("b"), hi("c"), lo("d")];
        let t = build_tree(units, &[vec![0, 1], vec![2, 3]], &[]).unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(t.root_node().id, ROOT_ID);
        assert_eq!(t.root_node().children.len(), 2);
        assert_eq!(t.leaf_units(t.root()), vec![0, 1, 2, 3]);
        assert!((t.root_node().virtual_params.p_max - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_group_collapses_to_root() {
        let units = vec![hi("a"), lo("b"), hi("c")];
        let t = build_tree(units, &[vec![0, 1, 2]], &[]).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert!(t.is_leaf_level(t.root()));
    }

    #[test]
    fn nested_tree_sums_match_flat() {
        let units: Vec<_> = (0..8)
            .map(|i| EssParams::ideal(format!("u{i}"), 0.1 + 0.37 * i as f64, 0.3 + 0.21 * i as f64, 0.1 * i as f64))
            .collect();
        let flat = aggregate("flat", &units).unwrap();
        let groups: Vec<Vec<usize>> = (0..4).map(|g| vec![2 * g, 2 * g + 1]).collect();
        let t = build_tree(units, &groups, &[2]).unwrap();
        assert_eq!(t.depth(), 3);
        let root = &t.root_node().virtual_params;
        assert!((root.p_max - flat.p_max).abs() <= 1e-12 * flat.p_max);
        assert!((root.capacity - flat.capacity).abs() <= 1e-12 * flat.capacity);
        assert!((root.soc_initial - flat.soc_initial).abs() <= 1e-12);
    }

    #[test]
    fn explicit_specs_are_validated() {
        let units = vec![hi("a"), lo("b")];
        let spec = |id: &str, ch: &[&str]| NodeSpec {
            id: id.into(),
            children: ch.iter().map(|s| s.to_string()).collect(),
        };
        let ok = AggregatorTree::from_specs(units.clone(), &[spec("top", &["m", "b"]), spec("m", &["a"])]).unwrap();
        assert_eq!(ok.root_node().id, "top");
        assert!(!ok.is_leaf_level(ok.root()));

        let missing = AggregatorTree::from_specs(units.clone(), &[spec("top", &["a"])]);
        assert!(missing.unwrap_err().to_string().contains("'b'"));
        let twice = AggregatorTree::from_specs(units.clone(), &[spec("top", &["a", "b", "a"])]);
        assert!(twice.is_err());
        let cycle = AggregatorTree::from_specs(
            units.clone(),
            &[spec("top", &["a", "b"]), spec("x", &["y"]), spec("y", &["x"])],
        );
        assert!(cycle.is_err());
        let unknown = AggregatorTree::from_specs(units, &[spec("top", &["a", "b", "zz"])]);
        assert!(unknown.is_err());
    }
}
