use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use fixedbitset::FixedBitSet;

use crate::crdt::ObjectStore;
use crate::model::{InterestSet, NodeId, OpId, Operation, Region, TransactionId};
use crate::sim::TopologySnapshot;
use crate::trace::{Trace, TraceEvent};

use super::VerifyError;

fn malformed(t: u64, msg: impl Into<String>) -> VerifyError {
    VerifyError::MalformedTrace {
        t,
        message: msg.into(),
    }
}

/// Ops that became visible at a node at logical time `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisStep {
    pub t: u64,
    pub ops: Vec<OpId>,
}

/// History, per-node visibility over time, program order and arbitration,
/// with happened-before precomputed as predecessor bitsets.
#[derive(Debug, Clone)]
pub struct AbstractExecution {
    ops: Vec<Operation>,
    index: BTreeMap<OpId, usize>,
    txns: BTreeMap<TransactionId, Vec<usize>>,
    vis_at: BTreeMap<NodeId, Vec<VisStep>>,
    arrival: BTreeMap<NodeId, Vec<Option<u64>>>,
    program_order: BTreeMap<NodeId, Vec<OpId>>,
    hb_pred: Vec<FixedBitSet>,
}

impl AbstractExecution {
    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn index_of(&self, id: &OpId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn op(&self, id: &OpId) -> Option<&Operation> {
        self.index_of(id).map(|i| &self.ops[i])
    }

    pub fn transactions(&self) -> &BTreeMap<TransactionId, Vec<usize>> {
        &self.txns
    }

    pub fn vis_at(&self) -> &BTreeMap<NodeId, Vec<VisStep>> {
        &self.vis_at
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.arrival.keys()
    }

    /// Logical time at which op `i` became visible at `node`, if ever.
    pub fn visible_since(&self, node: &NodeId, i: usize) -> Option<u64> {
        self.arrival.get(node).and_then(|a| a[i])
    }

    pub fn visible_at(&self, node: &NodeId, id: &OpId, t: u64) -> bool {
        self.index_of(id)
            .and_then(|i| self.visible_since(node, i))
            .is_some_and(|since| since <= t)
    }

    pub fn program_order(&self) -> &BTreeMap<NodeId, Vec<OpId>> {
        &self.program_order
    }

    /// Strict happened-before predecessors of op `i`.
    pub fn hb_predecessors(&self, i: usize) -> &FixedBitSet {
        &self.hb_pred[i]
    }

    pub fn happened_before(&self, a: &OpId, b: &OpId) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.hb_pred[j].contains(i),
            _ => false,
        }
    }

    /// All ops ordered by their arbitration timestamp.
    pub fn arbitration(&self) -> Vec<OpId> {
        let mut ids: Vec<&Operation> = self.ops.iter().collect();
        ids.sort_by(|a, b| {
            (a.lamport, &a.id.origin, a.id.seq).cmp(&(b.lamport, &b.id.origin, b.id.seq))
        });
        ids.into_iter().map(|o| o.id.clone()).collect()
    }
}

/// Lifts a trace into an abstract execution.
pub fn build_execution(trace: &Trace) -> Result<AbstractExecution, VerifyError> {
    // First pass: the history H in commit order.
    let mut ops: Vec<Operation> = Vec::new();
    let mut index: BTreeMap<OpId, usize> = BTreeMap::new();
    let mut txns: BTreeMap<TransactionId, Vec<usize>> = BTreeMap::new();
    let mut nodes: BTreeSet<NodeId> = trace.header.nodes.iter().map(|n| n.id.clone()).collect();
    for rec in &trace.events {
        match &rec.event {
            TraceEvent::LocalCommit {
                node,
                txn_id,
                op_ids,
                ops: committed,
                ..
            } => {
                if !nodes.contains(node) {
                    return Err(malformed(rec.t, format!("commit at unknown node {node}")));
                }
                let ids: Vec<OpId> = committed.iter().map(|o| o.id.clone()).collect();
                if &ids != op_ids || committed.is_empty() {
                    return Err(malformed(rec.t, "op ids do not match committed ops"));
                }
                for op in committed {
                    if &op.id.origin != node || &op.txn != txn_id {
                        return Err(malformed(rec.t, format!("{} does not belong to {txn_id} at {node}", op.id)));
                    }
                    if index.insert(op.id.clone(), ops.len()).is_some() {
                        return Err(malformed(rec.t, format!("{} committed twice", op.id)));
                    }
                    txns.entry(txn_id.clone()).or_default().push(ops.len());
                    ops.push(op.clone());
                }
            }
            TraceEvent::NodeRetired { new, .. } => {
                nodes.insert(new.clone());
            }
            _ => {}
        }
    }

    let n = ops.len();
    let mut arrival: BTreeMap<NodeId, Vec<Option<u64>>> = nodes.iter().map(|id| (id.clone(), vec![None; n])).collect();
    let mut vis_at: BTreeMap<NodeId, Vec<VisStep>> = nodes.iter().map(|id| (id.clone(), Vec::new())).collect();
    // Down-closure of everything visible at each node.
    let mut seen: BTreeMap<NodeId, FixedBitSet> = nodes.iter().map(|id| (id.clone(), FixedBitSet::with_capacity(n))).collect();
    let mut committed = FixedBitSet::with_capacity(n);
    let mut hb_pred: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(n); n];
    let mut program_order: BTreeMap<NodeId, Vec<OpId>> = BTreeMap::new();

    for rec in &trace.events {
        match &rec.event {
            TraceEvent::LocalCommit { node, op_ids, .. } => {
                let base = seen[node].clone();
                let mut within = FixedBitSet::with_capacity(n);
                for id in op_ids {
                    let i = index[id];
                    let mut pred = base.clone();
                    pred.union_with(&within);
                    hb_pred[i] = pred;
                    within.insert(i);
                    committed.insert(i);
                    arrival.get_mut(node).expect("known node")[i] = Some(rec.t);
                    program_order.entry(node.clone()).or_default().push(id.clone());
                }
                seen.get_mut(node).expect("known node").union_with(&within);
                vis_at.get_mut(node).expect("known node").push(VisStep {
                    t: rec.t,
                    ops: op_ids.clone(),
                });
            }
            TraceEvent::RemoteApply { node, op_ids, .. } => {
                let Some(arr) = arrival.get_mut(node) else {
                    return Err(malformed(rec.t, format!("apply at unknown node {node}")));
                };
                let mut closure = FixedBitSet::with_capacity(n);
                for id in op_ids {
                    let Some(&i) = index.get(id) else {
                        return Err(malformed(rec.t, format!("{id} applied but never committed")));
                    };
                    if !committed.contains(i) {
                        return Err(malformed(rec.t, format!("{id} applied before its commit")));
                    }
                    if arr[i].is_some() {
                        return Err(malformed(rec.t, format!("{id} applied twice at {node}")));
                    }
                    arr[i] = Some(rec.t);
                    closure.insert(i);
                    closure.union_with(&hb_pred[i]);
                }
                if !op_ids.is_empty() {
                    seen.get_mut(node).expect("known node").union_with(&closure);
                    vis_at.get_mut(node).expect("known node").push(VisStep {
                        t: rec.t,
                        ops: op_ids.clone(),
                    });
                }
            }
            _ => {}
        }
    }

    Ok(AbstractExecution {
        ops,
        index,
        txns,
        vis_at,
        arrival,
        program_order,
        hb_pred,
    })
}

/// A node's state as rebuilt from the trace alone.
#[derive(Debug, Clone)]
pub struct ReplicaState {
    pub interest: InterestSet,
    pub store: ObjectStore,
    pub applied: BTreeSet<OpId>,
}

#[derive(Debug, Clone)]
pub struct CheckpointState {
    pub label: String,
    pub t: u64,
    pub replicas: BTreeMap<NodeId, ReplicaState>,
    pub topology: TopologySnapshot,
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub checkpoints: Vec<CheckpointState>,
    /// Live nodes after the last event.
    pub last: BTreeMap<NodeId, ReplicaState>,
    pub topology: TopologySnapshot,
}

/// Re-executes every commit and delivery of a trace against fresh stores and
/// checks each recorded checkpoint hash.
pub fn replay(trace: &Trace) -> Result<Replay, VerifyError> {
    let schema = Arc::new(trace.header.schema.clone());
    let fresh = |interest: InterestSet| ReplicaState {
        interest,
        store: ObjectStore::new(schema.clone()),
        applied: BTreeSet::new(),
    };
    let mut live: BTreeMap<NodeId, ReplicaState> = trace
        .header
        .nodes
        .iter()
        .map(|n| (n.id.clone(), fresh(n.interest.clone())))
        .collect();
    let mut ops: BTreeMap<OpId, Operation> = BTreeMap::new();
    let mut topology = TopologySnapshot::new();
    let mut checkpoints = Vec::new();

    for rec in &trace.events {
        match &rec.event {
            TraceEvent::LocalCommit { node, ops: committed, .. } => {
                let Some(r) = live.get_mut(node) else {
                    return Err(malformed(rec.t, format!("commit at retired or unknown node {node}")));
                };
                for op in committed {
                    r.store.apply(op).map_err(|e| malformed(rec.t, e.to_string()))?;
                    r.applied.insert(op.id.clone());
                    ops.insert(op.id.clone(), op.clone());
                }
            }
            TraceEvent::RemoteApply { node, op_ids, .. } => {
                let Some(r) = live.get_mut(node) else {
                    return Err(malformed(rec.t, format!("apply at retired or unknown node {node}")));
                };
                for id in op_ids {
                    let op = ops
                        .get(id)
                        .ok_or_else(|| malformed(rec.t, format!("{id} applied before its commit")))?;
                    r.store.apply(op).map_err(|e| malformed(rec.t, e.to_string()))?;
                    r.applied.insert(id.clone());
                }
            }
            TraceEvent::NodeRetired { old, new, interest } => {
                if live.remove(old).is_none() {
                    return Err(malformed(rec.t, format!("retiring unknown node {old}")));
                }
                live.insert(new.clone(), fresh(interest.clone()));
                topology.rename(old, new);
            }
            TraceEvent::Connect { a, b } => topology.connect(a, b),
            TraceEvent::Disconnect { a, b } => topology.disconnect(a, b),
            TraceEvent::Checkpoint { label, hashes } => {
                for (id, recorded) in hashes {
                    let r = live
                        .get(id)
                        .ok_or_else(|| malformed(rec.t, format!("checkpoint names non-live node {id}")))?;
                    let actual = r.store.digest(&Region::all());
                    if &actual != recorded {
                        return Err(malformed(rec.t, format!("checkpoint {label}: state hash of {id} does not match replay")));
                    }
                }
                checkpoints.push(CheckpointState {
                    label: label.clone(),
                    t: rec.t,
                    replicas: live.clone(),
                    topology: topology.clone(),
                });
            }
            TraceEvent::SessionStart { .. } | TraceEvent::BatchSent { .. } | TraceEvent::SessionEnd { .. } => {}
        }
    }
    Ok(Replay {
        checkpoints,
        last: live,
        topology,
    })
}
