//! Per-node replica state: local transactions, atomic batch application, and
//! the op log that drives duplicate suppression.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::crdt::{CrdtError, CrdtMutation, ObjectStore, Scalar, Schema, Timestamp};
use crate::model::{
    InterestSet, NodeId, ObjectPath, OpId, Operation, Region, Transaction, TransactionId,
    VersionVector,
};
pub use crate::model::OperationHeader;
use crate::sync::{validate_batch, BatchViolation, SyncBatch};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error("transaction body is empty")]
    EmptyTransaction,
    #[error("{node}: {path} is outside the node's interest set")]
    OutOfInterest { node: NodeId, path: ObjectPath },
    #[error("{node}: register {path} written twice in one transaction")]
    ConflictingWrites { node: NodeId, path: ObjectPath },
    #[error(transparent)]
    Crdt(#[from] CrdtError),
    #[error("{node}: batch rejected: {violation}")]
    Batch { node: NodeId, violation: BatchViolation },
}

/// One step of a transaction body before the node stamps it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    Add(i64),
    Write(Scalar),
}

/// Ids that a batch application actually added.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Applied {
    pub op_ids: Vec<OpId>,
    pub header_ids: Vec<OpId>,
}

impl Applied {
    pub fn is_empty(&self) -> bool {
        self.op_ids.is_empty() && self.header_ids.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct NodeState {
    id: NodeId,
    interest: InterestSet,
    store: ObjectStore,
    log: BTreeMap<OpId, Operation>,
    headers: BTreeMap<OpId, OperationHeader>,
    known: VersionVector,
    clock: u64,
    next_txn: u64,
}

impl NodeState {
    pub fn new(id: NodeId, interest: InterestSet, schema: Arc<Schema>) -> Self {
        NodeState {
            id,
            interest,
            store: ObjectStore::new(schema),
            log: BTreeMap::new(),
            headers: BTreeMap::new(),
            known: VersionVector::new(),
            clock: 0,
            next_txn: 1,
        }
    }

    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn interest(&self) -> &InterestSet {
        &self.interest
    }

    pub fn store(&self) -> &ObjectStore {
        &self.store
    }

    pub fn log(&self) -> &BTreeMap<OpId, Operation> {
        &self.log
    }

    pub fn headers(&self) -> &BTreeMap<OpId, OperationHeader> {
        &self.headers
    }

    pub fn known(&self) -> &VersionVector {
        &self.known
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Runs a local transaction: all mutations apply, or none do.
    pub fn execute_local_txn(&mut self, body: &[(ObjectPath, Change)]) -> Result<Transaction, NodeError> {
        if body.is_empty() {
            return Err(NodeError::EmptyTransaction);
        }
        let mut written = BTreeSet::new();
        for (path, change) in body {
            if !self.interest.contains(path) {
                return Err(NodeError::OutOfInterest {
                    node: self.id.clone(),
                    path: path.clone(),
                });
            }
            if matches!(change, Change::Write(_)) && !written.insert(path) {
                return Err(NodeError::ConflictingWrites {
                    node: self.id.clone(),
                    path: path.clone(),
                });
            }
        }

        let lamport = self.clock + 1;
        let txn = TransactionId::new(self.id.clone(), self.next_txn);
        let mut deps = self.known.clone();
        let mut store = self.store.clone();
        let mut ops = Vec::with_capacity(body.len());
        for (path, change) in body {
            let seq = deps.get(&self.id) + 1;
            let mutation = match change {
                Change::Add(delta) => CrdtMutation::CounterAdd { delta: *delta },
                Change::Write(value) => CrdtMutation::RegisterWrite {
                    value: value.clone(),
                    ts: Timestamp::new(lamport, self.id.clone()),
                },
            };
            let op = Operation {
                id: OpId::new(self.id.clone(), seq),
                txn: txn.clone(),
                target: path.clone(),
                mutation,
                deps: deps.clone(),
                lamport,
            };
            store.apply(&op)?;
            deps.set(self.id.clone(), seq);
            ops.push(op);
        }

        self.store = store;
        self.known = deps;
        self.clock = lamport;
        self.next_txn += 1;
        for op in &ops {
            self.log.insert(op.id.clone(), op.clone());
        }
        Ok(Transaction {
            id: txn,
            origin: self.id.clone(),
            ops,
        })
    }

    /// Validates and applies a whole batch in one step. Already-known ids are
    /// skipped, so re-applying a batch changes nothing.
    pub fn apply_batch(&mut self, batch: &SyncBatch) -> Result<Applied, NodeError> {
        validate_batch(self, batch).map_err(|violation| NodeError::Batch {
            node: self.id.clone(),
            violation,
        })?;

        let mut store = self.store.clone();
        let mut known = self.known.clone();
        let mut applied = Applied::default();
        let mut max_lamport = 0;
        let mut new_ops = Vec::new();
        let mut new_headers = Vec::new();
        for op in batch.payload_ops() {
            if known.covers(&op.id) {
                continue;
            }
            store.apply(op)?;
            max_lamport = max_lamport.max(op.lamport);
            applied.op_ids.push(op.id.clone());
            new_ops.push(op.clone());
        }
        for h in batch.header_ops() {
            if known.covers(&h.id) {
                continue;
            }
            max_lamport = max_lamport.max(h.lamport);
            applied.header_ids.push(h.id.clone());
            new_headers.push(h.clone());
        }
        if applied.is_empty() {
            return Ok(applied);
        }
        for id in applied.op_ids.iter().chain(&applied.header_ids) {
            known.observe(id);
        }

        self.store = store;
        self.known = known;
        self.clock = self.clock.max(max_lamport) + 1;
        for op in new_ops {
            self.log.insert(op.id.clone(), op);
        }
        for h in new_headers {
            self.headers.insert(h.id.clone(), h);
        }
        Ok(applied)
    }

    /// Digest of the materialized values inside `scope`.
    pub fn state_hash(&self, scope: &Region) -> String {
        self.store.digest(scope)
    }

    /// Leaves the system and rejoins as a fresh node with `new` interest.
    /// Incarnations are numbered `name#2`, `name#3`, ...
    pub fn change_interest(&self, new: InterestSet) -> NodeState {
        let (base, generation) = match self.id.as_str().rsplit_once('#') {
            Some((base, n)) => match n.parse::<u64>() {
                Ok(n) => (base, n),
                Err(_) => (self.id.as_str(), 1),
            },
            None => (self.id.as_str(), 1),
        };
        let id = NodeId::new(format!("{base}#{}", generation + 1));
        NodeState::new(id, new, self.store.schema().clone())
    }

    /// Folds the op log into a fresh store. Must equal [`NodeState::store`].
    pub fn rebuild_store(&self) -> Result<ObjectStore, CrdtError> {
        let mut store = ObjectStore::new(self.store.schema().clone());
        for op in self.log.values() {
            store.apply(op)?;
        }
        Ok(store)
    }
}

pub fn execute_local_txn(
    n: &NodeState,
    body: &[(ObjectPath, Change)],
) -> Result<(NodeState, Transaction), NodeError> {
    let mut next = n.clone();
    let txn = next.execute_local_txn(body)?;
    Ok((next, txn))
}

pub fn apply_batch(n: &NodeState, batch: &SyncBatch) -> Result<NodeState, NodeError> {
    let mut next = n.clone();
    next.apply_batch(batch)?;
    Ok(next)
}

pub fn state_hash(n: &NodeState, scope: &Region) -> String {
    n.state_hash(scope)
}

pub fn change_interest(n: &NodeState, new: InterestSet) -> NodeState {
    n.change_interest(new)
}
