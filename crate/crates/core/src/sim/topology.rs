use std::collections::{BTreeMap, BTreeSet};

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::model::{InterestSet, NodeId, Region};

/// Undirected connectivity at one moment. Edges are stored with the smaller
/// id first; self edges are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TopologySnapshot {
    pub edges: BTreeSet<(NodeId, NodeId)>,
}

impl TopologySnapshot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_edges<'a, I>(edges: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut t = TopologySnapshot::new();
        for (a, b) in edges {
            t.connect(&NodeId::from(a), &NodeId::from(b));
        }
        t
    }

    pub fn connect(&mut self, a: &NodeId, b: &NodeId) {
        if a != b {
            self.edges.insert(ordered(a, b));
        }
    }

    pub fn disconnect(&mut self, a: &NodeId, b: &NodeId) {
        self.edges.remove(&ordered(a, b));
    }

    pub fn contains(&self, a: &NodeId, b: &NodeId) -> bool {
        self.edges.contains(&ordered(a, b))
    }

    pub fn rename(&mut self, old: &NodeId, new: &NodeId) {
        let moved: Vec<_> = self
            .edges
            .iter()
            .filter(|(a, b)| a == old || b == old)
            .cloned()
            .collect();
        for (a, b) in moved {
            self.edges.remove(&(a.clone(), b.clone()));
            let other = if &a == old { b } else { a };
            self.connect(new, &other);
        }
    }

    pub fn neighbors(&self, n: &NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter_map(|(a, b)| {
                if a == n {
                    Some(b.clone())
                } else if b == n {
                    Some(a.clone())
                } else {
                    None
                }
            })
            .collect()
    }

    /// Connected components over `nodes` (isolated nodes form singletons),
    /// each sorted, ordered by their smallest member.
    pub fn components(&self, nodes: &BTreeSet<NodeId>) -> Vec<Vec<NodeId>> {
        let mut all: BTreeSet<NodeId> = nodes.clone();
        for (a, b) in &self.edges {
            all.insert(a.clone());
            all.insert(b.clone());
        }
        let index: BTreeMap<&NodeId, usize> = all.iter().enumerate().map(|(i, n)| (n, i)).collect();
        let mut uf = UnionFind::<usize>::new(all.len());
        for (a, b) in &self.edges {
            uf.union(index[a], index[b]);
        }
        let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
        for n in &all {
            groups.entry(uf.find(index[n])).or_default().push(n.clone());
        }
        let mut out: Vec<Vec<NodeId>> = groups.into_values().collect();
        out.sort();
        out
    }
}

fn ordered(a: &NodeId, b: &NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IslandFinding {
    pub component_a: Vec<NodeId>,
    pub component_b: Vec<NodeId>,
    pub shared: Region,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IslandReport {
    pub findings: Vec<IslandFinding>,
    /// Isolated single nodes; informational only, never islands.
    pub singletons: Vec<NodeId>,
}

/// Pairs of multi-node components whose combined interests overlap while no
/// edge connects them.
pub fn detect_data_islands(topo: &TopologySnapshot, interests: &BTreeMap<NodeId, InterestSet>) -> IslandReport {
    let nodes: BTreeSet<NodeId> = interests.keys().cloned().collect();
    let components = topo.components(&nodes);
    let mut report = IslandReport::default();
    let mut groups: Vec<(Vec<NodeId>, Region)> = Vec::new();
    for comp in components {
        if comp.len() < 2 {
            report.singletons.extend(comp);
            continue;
        }
        let region = comp
            .iter()
            .filter_map(|n| interests.get(n))
            .fold(Region::empty(), |acc, s| acc.union(&s.effective()));
        groups.push((comp, region));
    }
    for (i, (ca, ra)) in groups.iter().enumerate() {
        for (cb, rb) in &groups[i + 1..] {
            let shared = ra.intersection(rb);
            if !shared.is_empty() {
                report.findings.push(IslandFinding {
                    component_a: ca.clone(),
                    component_b: cb.clone(),
                    shared,
                });
            }
        }
    }
    report
}
