use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{NodeId, OpId};

/// Per-origin operation counters. Missing entries are zero; zero entries are
/// never stored so equal vectors compare equal structurally.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionVector {
    entries: BTreeMap<NodeId, u64>,
}

impl VersionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, node: &NodeId) -> u64 {
        self.entries.get(node).copied().unwrap_or(0)
    }

    pub fn set(&mut self, node: NodeId, value: u64) {
        if value == 0 {
            self.entries.remove(&node);
        } else {
            self.entries.insert(node, value);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, u64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn merge(&self, other: &VersionVector) -> VersionVector {
        let mut out = self.clone();
        out.merge_in(other);
        out
    }

    pub fn merge_in(&mut self, other: &VersionVector) {
        for (node, v) in other.iter() {
            if v > self.get(node) {
                self.entries.insert(node.clone(), v);
            }
        }
    }

    pub fn leq(&self, other: &VersionVector) -> bool {
        self.iter().all(|(node, v)| v <= other.get(node))
    }

    pub fn increment(&self, node: &NodeId) -> VersionVector {
        let mut out = self.clone();
        out.set(node.clone(), self.get(node) + 1);
        out
    }

    pub fn covers(&self, id: &OpId) -> bool {
        self.get(&id.origin) >= id.seq
    }

    /// Raises the entry for `id.origin` to at least `id.seq`.
    pub fn observe(&mut self, id: &OpId) {
        if id.seq > self.get(&id.origin) {
            self.entries.insert(id.origin.clone(), id.seq);
        }
    }
}

pub fn vv_merge(a: &VersionVector, b: &VersionVector) -> VersionVector {
    a.merge(b)
}

pub fn vv_leq(a: &VersionVector, b: &VersionVector) -> bool {
    a.leq(b)
}

pub fn vv_increment(v: &VersionVector, n: &NodeId) -> VersionVector {
    v.increment(n)
}

pub fn vv_covers(v: &VersionVector, id: &OpId) -> bool {
    v.covers(id)
}

impl FromIterator<(NodeId, u64)> for VersionVector {
    fn from_iter<T: IntoIterator<Item = (NodeId, u64)>>(iter: T) -> Self {
        let mut vv = VersionVector::new();
        for (node, v) in iter {
            let cur = vv.get(&node);
            vv.set(node, cur.max(v));
        }
        vv
    }
}

impl fmt::Display for VersionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}
