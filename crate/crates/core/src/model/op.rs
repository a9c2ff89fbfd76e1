use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{InterestSet, NodeId, ObjectPath, VersionVector};
use crate::crdt::CrdtMutation;

/// System-wide operation identity. `seq` is contiguous per origin starting at 1
/// and doubles as the origin's program order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpId {
    pub origin: NodeId,
    pub seq: u64,
}

impl OpId {
    pub fn new(origin: impl Into<NodeId>, seq: u64) -> Self {
        OpId {
            origin: origin.into(),
            seq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransactionId {
    pub origin: NodeId,
    pub counter: u64,
}

impl TransactionId {
    pub fn new(origin: impl Into<NodeId>, counter: u64) -> Self {
        TransactionId {
            origin: origin.into(),
            counter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed identifier {0:?}")]
pub struct IdParseError(pub String);

fn split_id(s: &str, sep: char) -> Result<(NodeId, u64), IdParseError> {
    let (origin, n) = s.rsplit_once(sep).ok_or_else(|| IdParseError(s.to_string()))?;
    let n = n.parse().map_err(|_| IdParseError(s.to_string()))?;
    if origin.is_empty() {
        return Err(IdParseError(s.to_string()));
    }
    Ok((NodeId::from(origin), n))
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.origin, self.seq)
    }
}

impl FromStr for OpId {
    type Err = IdParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (origin, seq) = split_id(s, ':')?;
        Ok(OpId { origin, seq })
    }
}

impl fmt::Display for TransactionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.origin, self.counter)
    }
}

impl FromStr for TransactionId {
    type Err = IdParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (origin, counter) = split_id(s, '/')?;
        Ok(TransactionId { origin, counter })
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(OpId);
string_serde!(TransactionId);

/// One CRDT mutation of one object, with the causal snapshot of its origin.
///
/// `deps` is the origin's known vector when the operation was created, so
/// `deps[origin] == seq - 1`. `lamport` is the origin transaction's clock value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    pub id: OpId,
    pub txn: TransactionId,
    pub target: ObjectPath,
    pub mutation: CrdtMutation,
    pub deps: VersionVector,
    pub lamport: u64,
}

impl Operation {
    pub fn header(&self) -> OperationHeader {
        OperationHeader {
            id: self.id.clone(),
            txn: self.txn.clone(),
            target: self.target.clone(),
            deps: self.deps.clone(),
            lamport: self.lamport,
        }
    }
}

/// An operation without its payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationHeader {
    pub id: OpId,
    pub txn: TransactionId,
    pub target: ObjectPath,
    pub deps: VersionVector,
    pub lamport: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TransactionId,
    pub origin: NodeId,
    pub ops: Vec<Operation>,
}

/// The part of a transaction a given interest set can see. Keeps the
/// original transaction id so narrowed views can still be grouped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnProjection {
    pub txn: TransactionId,
    pub ops: Vec<Operation>,
}

pub fn op_matches(op: &Operation, s: &InterestSet) -> bool {
    s.contains(&op.target)
}

pub fn txn_project(t: &Transaction, s: &InterestSet) -> TxnProjection {
    TxnProjection {
        txn: t.id.clone(),
        ops: t.ops.iter().filter(|op| op_matches(op, s)).cloned().collect(),
    }
}

impl TxnProjection {
    pub fn project(&self, s: &InterestSet) -> TxnProjection {
        TxnProjection {
            txn: self.txn.clone(),
            ops: self.ops.iter().filter(|op| op_matches(op, s)).cloned().collect(),
        }
    }
}
