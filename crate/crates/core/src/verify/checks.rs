use std::collections::{BTreeMap, BTreeSet};

use crate::model::{op_matches, InterestSet, NodeId, ObjectPath, OpId, Region};
use crate::trace::{Trace, TraceEvent};

use super::execution::{replay, AbstractExecution};
use super::{VerifyError, Violation, ViolationKind};

/// `None` means the classic definitions: every op counts as in interest.
fn in_interest(e: &AbstractExecution, interests: Option<&BTreeMap<NodeId, InterestSet>>, node: &NodeId, i: usize) -> bool {
    match interests {
        None => true,
        Some(map) => map.get(node).is_some_and(|s| op_matches(&e.ops()[i], s)),
    }
}

fn atomicity(
    e: &AbstractExecution,
    interests: Option<&BTreeMap<NodeId, InterestSet>>,
    kind: ViolationKind,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for node in e.nodes() {
        for (txn, members) in e.transactions() {
            for &o1 in members {
                let Some(t1) = e.visible_since(node, o1) else {
                    continue;
                };
                for &o2 in members {
                    if o1 == o2 || e.visible_since(node, o2).is_some_and(|t2| t2 <= t1) {
                        continue;
                    }
                    if !in_interest(e, interests, node, o2) {
                        continue;
                    }
                    let (a, b) = (&e.ops()[o1], &e.ops()[o2]);
                    out.push(Violation {
                        kind,
                        node: Some(node.clone()),
                        ops: vec![a.id.clone(), b.id.clone()],
                        txns: vec![txn.clone()],
                        edge: None,
                        region: None,
                        time: Some(t1),
                        explanation: format!(
                            "{} of {txn} visible at {node} while {} ({}) is not",
                            a.id, b.id, b.target
                        ),
                    });
                }
            }
        }
    }
    out
}

fn causality(
    e: &AbstractExecution,
    interests: Option<&BTreeMap<NodeId, InterestSet>>,
    kind: ViolationKind,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for node in e.nodes() {
        for o2 in 0..e.len() {
            let Some(t2) = e.visible_since(node, o2) else {
                continue;
            };
            for o1 in e.hb_predecessors(o2).ones() {
                if e.visible_since(node, o1).is_some_and(|t1| t1 <= t2) {
                    continue;
                }
                if !in_interest(e, interests, node, o1) {
                    continue;
                }
                let (a, b) = (&e.ops()[o1], &e.ops()[o2]);
                out.push(Violation {
                    kind,
                    node: Some(node.clone()),
                    ops: vec![a.id.clone(), b.id.clone()],
                    txns: vec![a.txn.clone(), b.txn.clone()],
                    edge: None,
                    region: None,
                    time: Some(t2),
                    explanation: format!(
                        "{} ({}) visible at {node} without its causal predecessor {} ({})",
                        b.id, b.txn, a.id, a.txn
                    ),
                });
            }
        }
    }
    out
}

/// Transactions are all-or-nothing on each node's own interest.
pub fn check_intersection_atomicity(e: &AbstractExecution, interests: &BTreeMap<NodeId, InterestSet>) -> Vec<Violation> {
    atomicity(e, Some(interests), ViolationKind::IntersectionAtomicity)
}

/// The in-interest causal history of every visible op is visible too.
pub fn check_intersection_cc(e: &AbstractExecution, interests: &BTreeMap<NodeId, InterestSet>) -> Vec<Violation> {
    causality(e, Some(interests), ViolationKind::IntersectionCc)
}

pub fn check_atomicity(e: &AbstractExecution) -> Vec<Violation> {
    atomicity(e, None, ViolationKind::Atomicity)
}

pub fn check_cc(e: &AbstractExecution) -> Vec<Violation> {
    causality(e, None, ViolationKind::Cc)
}

/// At each checkpoint, every pair of live nodes that applied the same ops on
/// their shared region must hold the same state there.
pub fn check_convergence(trace: &Trace, interests: &BTreeMap<NodeId, InterestSet>) -> Result<Vec<Violation>, VerifyError> {
    let replayed = replay(trace)?;
    let mut targets: BTreeMap<OpId, ObjectPath> = BTreeMap::new();
    for rec in &trace.events {
        if let TraceEvent::LocalCommit { ops, .. } = &rec.event {
            targets.extend(ops.iter().map(|o| (o.id.clone(), o.target.clone())));
        }
    }
    let scoped = |applied: &BTreeSet<OpId>, region: &Region| -> Vec<OpId> {
        applied
            .iter()
            .filter(|id| targets.get(*id).is_some_and(|p| region.contains(p)))
            .cloned()
            .collect()
    };
    let mut out = Vec::new();
    for cp in &replayed.checkpoints {
        let live: Vec<_> = cp.replicas.iter().collect();
        for (i, (na, ra)) in live.iter().enumerate() {
            for (nb, rb) in &live[i + 1..] {
                let ea = interests.get(*na).unwrap_or(&ra.interest).effective();
                let eb = interests.get(*nb).unwrap_or(&rb.interest).effective();
                let shared = ea.intersection(&eb);
                if shared.is_empty() {
                    continue;
                }
                let a_ops = scoped(&ra.applied, &shared);
                if a_ops != scoped(&rb.applied, &shared) {
                    continue;
                }
                if ra.store.digest(&shared) != rb.store.digest(&shared) {
                    out.push(Violation {
                        kind: ViolationKind::Convergence,
                        node: Some((*na).clone()),
                        ops: a_ops,
                        txns: Vec::new(),
                        edge: Some(((*na).clone(), (*nb).clone())),
                        region: Some(shared.clone()),
                        time: Some(cp.t),
                        explanation: format!(
                            "checkpoint {}: {na} and {nb} applied the same ops on {shared} but differ",
                            cp.label
                        ),
                    });
                }
            }
        }
    }
    Ok(out)
}
