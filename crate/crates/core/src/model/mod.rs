//! Core vocabulary: node ids, object paths, regions and interest sets,
//! version vectors, operations and transactions.

mod clock;
mod op;
mod path;
mod region;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use clock::{vv_covers, vv_increment, vv_leq, vv_merge, VersionVector};
pub use op::{
    op_matches, txn_project, IdParseError, OpId, Operation, OperationHeader, Transaction,
    TransactionId, TxnProjection,
};
pub use path::{ObjectPath, PathError};
pub use region::{region_intersection, region_relation, Region, RegionRelation, ALL_TOKEN};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// What a node replicates: its subscriptions restricted by its permissions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InterestSet {
    pub subscriptions: Region,
    #[serde(default = "Region::all")]
    pub permissions: Region,
}

impl InterestSet {
    pub fn new(subscriptions: Region, permissions: Region) -> Self {
        InterestSet {
            subscriptions,
            permissions,
        }
    }

    /// Subscriptions with unrestricted permissions.
    pub fn subscribed(subscriptions: Region) -> Self {
        InterestSet::new(subscriptions, Region::all())
    }

    pub fn everything() -> Self {
        InterestSet::subscribed(Region::all())
    }

    pub fn effective(&self) -> Region {
        self.subscriptions.intersection(&self.permissions)
    }

    pub fn contains(&self, path: &ObjectPath) -> bool {
        self.subscriptions.contains(path) && self.permissions.contains(path)
    }
}

/// Relation between the local and remote effective interest regions.
pub fn classify_session(lset: &InterestSet, rset: &InterestSet) -> RegionRelation {
    lset.effective().relation(&rset.effective())
}
