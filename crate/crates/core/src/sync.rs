//! Peer-to-peer sync sessions: interest exchange, summary-driven diffs,
//! transaction narrowing and atomic batch delivery.
//!
//! Two metadata modes exist. In [`MetadataMode::IntersectionOnly`] a sender
//! ships only the operations the receiver is interested in, and closure can
//! only be guaranteed over the intersection of the two interest sets. In
//! [`MetadataMode::MetadataEverywhere`] every uncovered operation travels,
//! either with its payload (inside the receiver's interest) or as a bare
//! header (outside it); a transaction whose in-interest payload the sender
//! lacks is withheld whole, together with everything causally after it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    classify_session, InterestSet, NodeId, ObjectPath, OpId, Operation, OperationHeader, Region,
    RegionRelation, TransactionId, VersionVector,
};
use crate::node::{Applied, NodeError, NodeState};
use crate::trace::TraceEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetadataMode {
    #[default]
    IntersectionOnly,
    MetadataEverywhere,
}

impl fmt::Display for MetadataMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetadataMode::IntersectionOnly => "intersection-only",
            MetadataMode::MetadataEverywhere => "metadata-everywhere",
        })
    }
}

impl std::str::FromStr for MetadataMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intersection-only" => Ok(MetadataMode::IntersectionOnly),
            "metadata-everywhere" => Ok(MetadataMode::MetadataEverywhere),
            other => Err(format!("unknown metadata mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionConfig {
    pub metadata_mode: MetadataMode,
}

impl SessionConfig {
    pub fn new(metadata_mode: MetadataMode) -> Self {
        SessionConfig { metadata_mode }
    }
}

/// What a peer announces before any data moves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub interest: InterestSet,
    /// The full known vector, unfiltered.
    pub known: VersionVector,
}

impl Summary {
    pub fn of(node: &NodeState) -> Self {
        Summary {
            interest: node.interest().clone(),
            known: node.known().clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "as", rename_all = "snake_case")]
pub enum BatchItem {
    Payload(Operation),
    Header(OperationHeader),
}

impl BatchItem {
    pub fn id(&self) -> &OpId {
        match self {
            BatchItem::Payload(op) => &op.id,
            BatchItem::Header(h) => &h.id,
        }
    }

    pub fn txn(&self) -> &TransactionId {
        match self {
            BatchItem::Payload(op) => &op.txn,
            BatchItem::Header(h) => &h.txn,
        }
    }

    pub fn target(&self) -> &ObjectPath {
        match self {
            BatchItem::Payload(op) => &op.target,
            BatchItem::Header(h) => &h.target,
        }
    }

    pub fn deps(&self) -> &VersionVector {
        match self {
            BatchItem::Payload(op) => &op.deps,
            BatchItem::Header(h) => &h.deps,
        }
    }
}

/// The unit one peer hands to another in a session, in dependency order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncBatch {
    pub session_id: u64,
    pub mode: MetadataMode,
    items: Vec<BatchItem>,
}

impl SyncBatch {
    pub fn new(session_id: u64, mode: MetadataMode, items: Vec<BatchItem>) -> Self {
        SyncBatch {
            session_id,
            mode,
            items,
        }
    }

    pub fn items(&self) -> &[BatchItem] {
        &self.items
    }

    pub fn payload_ops(&self) -> impl Iterator<Item = &Operation> {
        self.items.iter().filter_map(|i| match i {
            BatchItem::Payload(op) => Some(op),
            BatchItem::Header(_) => None,
        })
    }

    pub fn header_ops(&self) -> impl Iterator<Item = &OperationHeader> {
        self.items.iter().filter_map(|i| match i {
            BatchItem::Header(h) => Some(h),
            BatchItem::Payload(_) => None,
        })
    }

    pub fn payload_ids(&self) -> Vec<OpId> {
        self.payload_ops().map(|o| o.id.clone()).collect()
    }

    pub fn header_ids(&self) -> Vec<OpId> {
        self.header_ops().map(|h| h.id.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    /// Keeps only items whose id satisfies `keep`. Used to build faulty batches in tests.
    pub fn retain(&mut self, mut keep: impl FnMut(&OpId) -> bool) {
        self.items.retain(|i| keep(i.id()));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum BatchViolation {
    #[error("{op} appears twice")]
    Duplicate { op: OpId },
    #[error("{op} is outside the receiver's interest")]
    OutOfInterest { op: OpId },
    #[error("{op} arrived as a header although the receiver needs its payload")]
    MissingPayload { op: OpId },
    #[error("{op} arrived as a header outside metadata-everywhere mode")]
    UnexpectedHeader { op: OpId },
    #[error("{op} depends on {missing}, which is neither known nor delivered before it")]
    CausalGap { op: OpId, missing: OpId },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("interest sets are disjoint; nothing to replicate")]
pub struct SessionClosed;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyncError {
    #[error("session between {0} and itself")]
    SelfSession(NodeId),
    #[error(transparent)]
    Node(#[from] NodeError),
}

/// Exchanges interest sets. Disjoint interests close the session.
pub fn open_session(a: &NodeState, b: &NodeState) -> Result<(RegionRelation, Region), SessionClosed> {
    let relation = classify_session(a.interest(), b.interest());
    if relation == RegionRelation::Disjoint {
        return Err(SessionClosed);
    }
    let intersection = a.interest().effective().intersection(&b.interest().effective());
    Ok((relation, intersection))
}

/// Everything `sender` holds that the receiver's summary does not cover and
/// may receive, topologically ordered by dependencies.
pub fn compute_diff(sender: &NodeState, receiver: &Summary, cfg: &SessionConfig, session_id: u64) -> SyncBatch {
    let items = match cfg.metadata_mode {
        MetadataMode::IntersectionOnly => sender
            .log()
            .values()
            .filter(|op| !receiver.known.covers(&op.id) && receiver.interest.contains(&op.target))
            .cloned()
            .map(BatchItem::Payload)
            .collect(),
        MetadataMode::MetadataEverywhere => everywhere_items(sender, receiver),
    };
    SyncBatch::new(session_id, cfg.metadata_mode, topo_order(items))
}

fn everywhere_items(sender: &NodeState, receiver: &Summary) -> Vec<BatchItem> {
    // (id -> (item if sendable, txn, deps)); `None` marks an in-interest op the
    // sender only knows by header.
    let mut candidates: BTreeMap<OpId, (Option<BatchItem>, TransactionId, VersionVector)> = BTreeMap::new();
    for op in sender.log().values() {
        if receiver.known.covers(&op.id) {
            continue;
        }
        let item = if receiver.interest.contains(&op.target) {
            BatchItem::Payload(op.clone())
        } else {
            BatchItem::Header(op.header())
        };
        candidates.insert(op.id.clone(), (Some(item), op.txn.clone(), op.deps.clone()));
    }
    for h in sender.headers().values() {
        if receiver.known.covers(&h.id) {
            continue;
        }
        let item = (!receiver.interest.contains(&h.target)).then(|| BatchItem::Header(h.clone()));
        candidates.insert(h.id.clone(), (item, h.txn.clone(), h.deps.clone()));
    }

    // Lowest blocked seq per origin; blocking is upward closed per origin
    // because each op depends on its predecessor.
    let mut min_blocked: BTreeMap<NodeId, u64> = BTreeMap::new();
    let mut blocked_txns: BTreeSet<TransactionId> = BTreeSet::new();
    let mut blocked: BTreeSet<OpId> = BTreeSet::new();
    for (id, (item, txn, _)) in &candidates {
        if item.is_none() {
            block(id, txn, &mut min_blocked, &mut blocked, &mut blocked_txns);
        }
    }
    loop {
        let mut changed = false;
        for (id, (_, txn, deps)) in &candidates {
            if blocked.contains(id) {
                continue;
            }
            let hit = min_blocked
                .get(&id.origin)
                .is_some_and(|m| id.seq >= *m)
                || deps
                    .iter()
                    .any(|(o, d)| min_blocked.get(o).is_some_and(|m| d >= *m))
                || blocked_txns.contains(txn);
            if hit {
                block(id, txn, &mut min_blocked, &mut blocked, &mut blocked_txns);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    candidates
        .into_iter()
        .filter(|(id, _)| !blocked.contains(id))
        .filter_map(|(_, (item, _, _))| item)
        .collect()
}

fn block(
    id: &OpId,
    txn: &TransactionId,
    min_blocked: &mut BTreeMap<NodeId, u64>,
    blocked: &mut BTreeSet<OpId>,
    blocked_txns: &mut BTreeSet<TransactionId>,
) {
    blocked.insert(id.clone());
    blocked_txns.insert(txn.clone());
    let e = min_blocked.entry(id.origin.clone()).or_insert(id.seq);
    *e = (*e).min(id.seq);
}

/// Kahn's algorithm over "deps cover" edges, ties broken by op id.
fn topo_order(mut items: Vec<BatchItem>) -> Vec<BatchItem> {
    items.sort_by(|a, b| a.id().cmp(b.id()));
    let n = items.len();
    let mut indegree = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (x, item) in items.iter().enumerate() {
        for (y, other) in items.iter().enumerate() {
            if x != y && item.deps().covers(other.id()) {
                succ[y].push(x);
                indegree[x] += 1;
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &s in &succ[i] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.insert(s);
            }
        }
    }
    assert_eq!(order.len(), n, "dependency cycle in batch");
    let mut slots: Vec<Option<BatchItem>> = items.into_iter().map(Some).collect();
    order.into_iter().map(|i| slots[i].take().expect("each index once")).collect()
}

/// Checks a batch against the receiver without mutating anything.
pub fn validate_batch(receiver: &NodeState, batch: &SyncBatch) -> Result<(), BatchViolation> {
    let mut seen = BTreeSet::new();
    for item in batch.items() {
        if !seen.insert(item.id().clone()) {
            return Err(BatchViolation::Duplicate { op: item.id().clone() });
        }
        let inside = receiver.interest().contains(item.target());
        match item {
            BatchItem::Payload(op) if !inside => {
                return Err(BatchViolation::OutOfInterest { op: op.id.clone() })
            }
            BatchItem::Header(h) if batch.mode != MetadataMode::MetadataEverywhere => {
                return Err(BatchViolation::UnexpectedHeader { op: h.id.clone() })
            }
            BatchItem::Header(h) if inside => {
                return Err(BatchViolation::MissingPayload { op: h.id.clone() })
            }
            _ => {}
        }
        let id = item.id();
        if item.deps().get(&id.origin) + 1 != id.seq && !receiver.known().covers(id) {
            return Err(BatchViolation::CausalGap {
                op: id.clone(),
                missing: OpId::new(id.origin.clone(), item.deps().get(&id.origin).min(id.seq) + 1),
            });
        }
    }

    match batch.mode {
        MetadataMode::MetadataEverywhere => {
            // Every op below each dependency vector must be known or come earlier.
            let mut running = receiver.known().clone();
            for item in batch.items() {
                let id = item.id();
                if running.covers(id) {
                    continue;
                }
                for (origin, d) in item.deps().iter() {
                    let have = running.get(origin);
                    if have < d {
                        return Err(BatchViolation::CausalGap {
                            op: id.clone(),
                            missing: OpId::new(origin.clone(), have + 1),
                        });
                    }
                }
                running.observe(id);
            }
        }
        MetadataMode::IntersectionOnly => {
            // Only batch members can be checked: a dependency that is
            // delivered must be delivered first.
            let items = batch.items();
            for (i, item) in items.iter().enumerate() {
                for later in &items[i + 1..] {
                    if item.deps().covers(later.id()) && !receiver.known().covers(later.id()) {
                        return Err(BatchViolation::CausalGap {
                            op: item.id().clone(),
                            missing: later.id().clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionOutcome {
    Closed,
    Completed {
        relation: RegionRelation,
        intersection: Region,
        a_to_b: SyncBatch,
        b_to_a: SyncBatch,
        applied_at_b: Applied,
        applied_at_a: Applied,
    },
}

impl SessionOutcome {
    /// Trace events for this session, in emission order.
    pub fn events(&self, session_id: u64, a: &NodeId, b: &NodeId) -> Vec<TraceEvent> {
        match self {
            SessionOutcome::Closed => vec![
                TraceEvent::SessionStart {
                    session_id,
                    a: a.clone(),
                    b: b.clone(),
                    relation: RegionRelation::Disjoint,
                    intersection: Region::empty(),
                },
                TraceEvent::SessionEnd { session_id },
            ],
            SessionOutcome::Completed {
                relation,
                intersection,
                a_to_b,
                b_to_a,
                applied_at_b,
                applied_at_a,
            } => vec![
                TraceEvent::SessionStart {
                    session_id,
                    a: a.clone(),
                    b: b.clone(),
                    relation: *relation,
                    intersection: intersection.clone(),
                },
                TraceEvent::BatchSent {
                    session_id,
                    from: a.clone(),
                    to: b.clone(),
                    op_ids: a_to_b.payload_ids(),
                    header_ids: a_to_b.header_ids(),
                },
                TraceEvent::BatchSent {
                    session_id,
                    from: b.clone(),
                    to: a.clone(),
                    op_ids: b_to_a.payload_ids(),
                    header_ids: b_to_a.header_ids(),
                },
                TraceEvent::RemoteApply {
                    node: b.clone(),
                    session_id,
                    op_ids: applied_at_b.op_ids.clone(),
                    header_ids: applied_at_b.header_ids.clone(),
                },
                TraceEvent::RemoteApply {
                    node: a.clone(),
                    session_id,
                    op_ids: applied_at_a.op_ids.clone(),
                    header_ids: applied_at_a.header_ids.clone(),
                },
                TraceEvent::SessionEnd { session_id },
            ],
        }
    }
}

/// One full bidirectional session. Both diffs come from the pre-session
/// states; on any error neither node changes.
pub fn run_session(
    a: &mut NodeState,
    b: &mut NodeState,
    cfg: &SessionConfig,
    session_id: u64,
) -> Result<SessionOutcome, SyncError> {
    if a.id() == b.id() {
        return Err(SyncError::SelfSession(a.id().clone()));
    }
    let (relation, intersection) = match open_session(a, b) {
        Ok(opened) => opened,
        Err(SessionClosed) => return Ok(SessionOutcome::Closed),
    };
    let a_to_b = compute_diff(a, &Summary::of(b), cfg, session_id);
    let b_to_a = compute_diff(b, &Summary::of(a), cfg, session_id);
    let mut next_a = a.clone();
    let mut next_b = b.clone();
    let applied_at_b = next_b.apply_batch(&a_to_b)?;
    let applied_at_a = next_a.apply_batch(&b_to_a)?;
    *a = next_a;
    *b = next_b;
    Ok(SessionOutcome::Completed {
        relation,
        intersection,
        a_to_b,
        b_to_a,
        applied_at_b,
        applied_at_a,
    })
}
