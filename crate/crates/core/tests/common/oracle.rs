//! Brute-force reference semantics: hb as an explicit relation closed with
//! Floyd-Warshall, and each guarantee checked by exhaustive quantification
//! over every node and every logical time at which its visible set changes.

use std::collections::{BTreeMap, BTreeSet};

use meshsync_core::model::{InterestSet, NodeId, ObjectPath, OpId, TransactionId};
use meshsync_core::trace::{Trace, TraceEvent};
use meshsync_core::verify::{Violation, ViolationKind};

/// (kind, node, first op, second op, earliest time)
pub type Witness = (ViolationKind, NodeId, OpId, OpId, u64);

struct Op {
    id: OpId,
    txn: TransactionId,
    target: ObjectPath,
    commit_t: u64,
}

pub struct Oracle {
    ops: Vec<Op>,
    arrival: BTreeMap<(NodeId, usize), u64>,
    nodes: BTreeSet<NodeId>,
    hb: Vec<Vec<bool>>,
}

impl Oracle {
    #[allow(clippy::needless_range_loop)]
    pub fn new(trace: &Trace) -> Self {
        let mut ops = Vec::new();
        let mut nodes: BTreeSet<NodeId> = trace.header.nodes.iter().map(|n| n.id.clone()).collect();
        let mut arrival = BTreeMap::new();
        for rec in &trace.events {
            match &rec.event {
                TraceEvent::LocalCommit { node, ops: committed, .. } => {
                    for o in committed {
                        arrival.insert((node.clone(), ops.len()), rec.t);
                        ops.push(Op {
                            id: o.id.clone(),
                            txn: o.txn.clone(),
                            target: o.target.clone(),
                            commit_t: rec.t,
                        });
                    }
                }
                TraceEvent::RemoteApply { node, op_ids, .. } => {
                    for id in op_ids {
                        let i = ops.iter().position(|o| &o.id == id).expect("committed before applied");
                        arrival.entry((node.clone(), i)).or_insert(rec.t);
                    }
                }
                TraceEvent::NodeRetired { new, .. } => {
                    nodes.insert(new.clone());
                }
                _ => {}
            }
        }

        let n = ops.len();
        let mut hb = vec![vec![false; n]; n];
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let origin_b = &ops[b].id.origin;
                // a is visible at b's origin before b happens there
                let vis = arrival.get(&(origin_b.clone(), a)).is_some_and(|t| *t < ops[b].commit_t);
                let program = ops[a].id.origin == *origin_b && ops[a].id.seq < ops[b].id.seq;
                hb[a][b] = vis || program;
            }
        }
        for k in 0..n {
            for i in 0..n {
                if !hb[i][k] {
                    continue;
                }
                for j in 0..n {
                    if hb[k][j] {
                        hb[i][j] = true;
                    }
                }
            }
        }
        Oracle { ops, arrival, nodes, hb }
    }

    fn visible(&self, node: &NodeId, i: usize, t: u64) -> bool {
        self.arrival.get(&(node.clone(), i)).is_some_and(|a| *a <= t)
    }

    fn times(&self, node: &NodeId) -> BTreeSet<u64> {
        self.arrival
            .iter()
            .filter(|((n, _), _)| n == node)
            .map(|(_, t)| *t)
            .collect()
    }

    fn matches(interests: Option<&BTreeMap<NodeId, InterestSet>>, node: &NodeId, target: &ObjectPath) -> bool {
        interests.is_none_or(|m| m.get(node).is_some_and(|s| s.contains(target)))
    }

    pub fn atomicity(&self, interests: Option<&BTreeMap<NodeId, InterestSet>>) -> BTreeSet<Witness> {
        let kind = if interests.is_some() {
            ViolationKind::IntersectionAtomicity
        } else {
            ViolationKind::Atomicity
        };
        let mut first: BTreeMap<(NodeId, usize, usize), u64> = BTreeMap::new();
        for node in &self.nodes {
            for t in self.times(node) {
                for a in 0..self.ops.len() {
                    for b in 0..self.ops.len() {
                        if a == b || self.ops[a].txn != self.ops[b].txn {
                            continue;
                        }
                        let holds = !self.visible(node, a, t)
                            || self.visible(node, b, t)
                            || !Self::matches(interests, node, &self.ops[b].target);
                        if !holds {
                            first.entry((node.clone(), a, b)).or_insert(t);
                        }
                    }
                }
            }
        }
        first
            .into_iter()
            .map(|((n, a, b), t)| (kind, n, self.ops[a].id.clone(), self.ops[b].id.clone(), t))
            .collect()
    }

    pub fn causality(&self, interests: Option<&BTreeMap<NodeId, InterestSet>>) -> BTreeSet<Witness> {
        let kind = if interests.is_some() {
            ViolationKind::IntersectionCc
        } else {
            ViolationKind::Cc
        };
        let mut first: BTreeMap<(NodeId, usize, usize), u64> = BTreeMap::new();
        for node in &self.nodes {
            for t in self.times(node) {
                for a in 0..self.ops.len() {
                    for b in 0..self.ops.len() {
                        if !self.hb[a][b] {
                            continue;
                        }
                        let holds = !self.visible(node, b, t)
                            || self.visible(node, a, t)
                            || !Self::matches(interests, node, &self.ops[a].target);
                        if !holds {
                            first.entry((node.clone(), a, b)).or_insert(t);
                        }
                    }
                }
            }
        }
        first
            .into_iter()
            .map(|((n, a, b), t)| (kind, n, self.ops[a].id.clone(), self.ops[b].id.clone(), t))
            .collect()
    }

    pub fn happened_before(&self, a: &OpId, b: &OpId) -> bool {
        let i = self.ops.iter().position(|o| &o.id == a);
        let j = self.ops.iter().position(|o| &o.id == b);
        matches!((i, j), (Some(i), Some(j)) if self.hb[i][j])
    }
}

pub fn witnesses(violations: &[Violation]) -> BTreeSet<Witness> {
    violations
        .iter()
        .map(|v| {
            (
                v.kind,
                v.node.clone().expect("node"),
                v.ops[0].clone(),
                v.ops[1].clone(),
                v.time.expect("time"),
            )
        })
        .collect()
}
