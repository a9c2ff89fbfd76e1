use std::collections::{BTreeMap, BTreeSet};

use petgraph::unionfind::UnionFind;

use crate::model::{InterestSet, NodeId, Region, RegionRelation};
use crate::sim::{Footprint, TopologySnapshot};

use super::{Violation, ViolationKind};

fn edge_violation(a: &NodeId, b: &NodeId, explanation: String) -> Violation {
    Violation {
        kind: ViolationKind::Hierarchy,
        node: None,
        ops: Vec::new(),
        txns: Vec::new(),
        edge: Some((a.clone(), b.clone())),
        region: None,
        time: None,
        explanation,
    }
}

/// The topology must be a forest that can be rooted so that every node's
/// effective region is contained in its parent's.
///
/// Neighbors with equal regions are merged first. After that a valid rooting
/// exists iff every edge joins comparable regions and no node has two strictly
/// wider neighbors (it would need two parents).
pub fn check_hierarchy(topo: &TopologySnapshot, interests: &BTreeMap<NodeId, InterestSet>) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut nodes: BTreeSet<NodeId> = interests.keys().cloned().collect();
    for (a, b) in &topo.edges {
        nodes.insert(a.clone());
        nodes.insert(b.clone());
    }
    let index: BTreeMap<&NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let region = |n: &NodeId| interests.get(n).map(InterestSet::effective);

    let mut forest = UnionFind::<usize>::new(nodes.len());
    for (a, b) in &topo.edges {
        if !forest.union(index[a], index[b]) {
            out.push(edge_violation(a, b, format!("edge {a}-{b} closes a cycle; the topology is not a forest")));
        }
    }

    let mut same = UnionFind::<usize>::new(nodes.len());
    let mut wider: Vec<(NodeId, NodeId)> = Vec::new();
    for (a, b) in &topo.edges {
        let (Some(ra), Some(rb)) = (region(a), region(b)) else {
            out.push(edge_violation(a, b, format!("edge {a}-{b} joins a node with no declared interest")));
            continue;
        };
        match ra.relation(&rb) {
            RegionRelation::Equal => {
                same.union(index[a], index[b]);
            }
            RegionRelation::ASubsetB => wider.push((a.clone(), b.clone())),
            RegionRelation::ASupersetB => wider.push((b.clone(), a.clone())),
            RegionRelation::Overlap | RegionRelation::Disjoint => out.push(edge_violation(
                a,
                b,
                format!("{a} ({ra}) and {b} ({rb}) are incomparable, so neither can be the parent"),
            )),
        }
    }

    let mut parents: BTreeMap<usize, Vec<(NodeId, NodeId)>> = BTreeMap::new();
    for (child, parent) in wider {
        parents.entry(same.find(index[&child])).or_default().push((child, parent));
    }
    for ups in parents.values() {
        if ups.len() < 2 {
            continue;
        }
        for (child, parent) in ups {
            out.push(edge_violation(
                child,
                parent,
                format!(
                    "{child} is narrower than {} wider neighbors; a narrow node sits between wider ones",
                    ups.len()
                ),
            ));
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Every node touching a transaction class's footprint (writes plus causal
/// dependencies) must hold all of it.
pub fn check_interest_config(footprints: &[Footprint], interests: &BTreeMap<NodeId, InterestSet>) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    for (k, fp) in footprints.iter().enumerate() {
        let f = fp.writes.union(&fp.deps);
        let name = fp.name.clone().unwrap_or_else(|| format!("class {k}"));
        for (node, interest) in interests {
            let eff = interest.effective();
            if !eff.intersects(&f) || f.is_subset_of(&eff) {
                continue;
            }
            let uncovered = Region::from_prefixes(
                f.prefixes()
                    .filter(|p| !Region::from_prefixes([(*p).clone()]).is_subset_of(&eff))
                    .cloned(),
            );
            let uncovered = if f.is_all() { f.clone() } else { uncovered };
            out.push(Violation {
                kind: ViolationKind::InterestConfig,
                node: Some(node.clone()),
                ops: Vec::new(),
                txns: Vec::new(),
                edge: None,
                region: Some(uncovered.clone()),
                time: None,
                explanation: format!("{node} touches {name} ({f}) but does not hold {uncovered}"),
            });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
