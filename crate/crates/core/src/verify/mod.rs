//! Checkers over recorded traces: per-node transactional and causal
//! guarantees, convergence, and static topology/interest analyses.

mod checks;
mod execution;
mod statics;
mod table;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NodeId, OpId, Region, TransactionId};

pub use checks::{check_atomicity, check_cc, check_convergence, check_intersection_atomicity, check_intersection_cc};
pub use execution::{build_execution, replay, AbstractExecution, CheckpointState, Replay, ReplicaState, VisStep};
pub use statics::{check_hierarchy, check_interest_config};
pub use table::{expected_guarantees, DisjointSession, GuaranteeRow, Scope};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("malformed trace at t={t}: {message}")]
    MalformedTrace { t: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    IntersectionAtomicity,
    IntersectionCc,
    Atomicity,
    Cc,
    Convergence,
    Hierarchy,
    InterestConfig,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 7] = [
        ViolationKind::IntersectionAtomicity,
        ViolationKind::IntersectionCc,
        ViolationKind::Atomicity,
        ViolationKind::Cc,
        ViolationKind::Convergence,
        ViolationKind::Hierarchy,
        ViolationKind::InterestConfig,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::IntersectionAtomicity => "intersection-atomicity",
            ViolationKind::IntersectionCc => "intersection-cc",
            ViolationKind::Atomicity => "atomicity",
            ViolationKind::Cc => "cc",
            ViolationKind::Convergence => "convergence",
            ViolationKind::Hierarchy => "hierarchy",
            ViolationKind::InterestConfig => "interest-config",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ViolationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ViolationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown check {s:?}"))
    }
}

/// One witnessed breach. The ids and time are enough to find it in the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ops: Vec<OpId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub txns: Vec<TransactionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<(NodeId, NodeId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<u64>,
    pub explanation: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.kind)?;
        if let Some(t) = self.time {
            write!(f, " t={t}")?;
        }
        if let Some((a, b)) = &self.edge {
            write!(f, " {a}-{b}:")?;
        }
        write!(f, " {}", self.explanation)
    }
}
