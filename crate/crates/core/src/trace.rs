//! Line-oriented execution traces.
//!
//! The first line is a [`TraceHeader`]; every further line is one
//! [`TraceRecord`] with a strictly increasing logical time `t`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crdt::Schema;
use crate::model::{InterestSet, NodeId, OpId, Operation, Region, RegionRelation, TransactionId};
use crate::sync::MetadataMode;

pub const TRACE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDecl {
    pub id: NodeId,
    pub interest: InterestSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: u32,
    pub scenario: String,
    pub digest: String,
    pub seed: u64,
    pub mode: MetadataMode,
    pub nodes: Vec<NodeDecl>,
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    LocalCommit {
        node: NodeId,
        txn_id: TransactionId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        op_ids: Vec<OpId>,
        ops: Vec<Operation>,
    },
    SessionStart {
        session_id: u64,
        a: NodeId,
        b: NodeId,
        relation: RegionRelation,
        intersection: Region,
    },
    BatchSent {
        session_id: u64,
        from: NodeId,
        to: NodeId,
        op_ids: Vec<OpId>,
        header_ids: Vec<OpId>,
    },
    RemoteApply {
        node: NodeId,
        session_id: u64,
        op_ids: Vec<OpId>,
        header_ids: Vec<OpId>,
    },
    SessionEnd {
        session_id: u64,
    },
    NodeRetired {
        old: NodeId,
        new: NodeId,
        interest: InterestSet,
    },
    Connect {
        a: NodeId,
        b: NodeId,
    },
    Disconnect {
        a: NodeId,
        b: NodeId,
    },
    Checkpoint {
        label: String,
        /// Digest of each live node's whole store.
        hashes: BTreeMap<NodeId, String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: logical time {t} does not increase")]
    NonMonotonic { line: usize, t: u64 },
    #[error("unsupported trace format {0}")]
    Format(u32),
}

impl Trace {
    pub fn new(header: TraceHeader) -> Self {
        Trace {
            header,
            events: Vec::new(),
        }
    }

    /// Appends an event at the next logical time and returns that time.
    pub fn push(&mut self, event: TraceEvent) -> u64 {
        let t = self.events.last().map_or(1, |r| r.t + 1);
        self.events.push(TraceRecord { t, event });
        t
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for rec in &self.events {
            out.push_str(&serde_json::to_string(rec).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, TraceError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(TraceError::Empty)?;
        let header: TraceHeader =
            serde_json::from_str(first).map_err(|source| TraceError::Json { line: 1, source })?;
        if header.format != TRACE_FORMAT {
            return Err(TraceError::Format(header.format));
        }
        let mut events: Vec<TraceRecord> = Vec::new();
        for (i, line) in lines {
            let rec: TraceRecord = serde_json::from_str(line)
                .map_err(|source| TraceError::Json { line: i + 1, source })?;
            if events.last().is_some_and(|prev| prev.t >= rec.t) {
                return Err(TraceError::NonMonotonic { line: i + 1, t: rec.t });
            }
            events.push(rec);
        }
        Ok(Trace { header, events })
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    /// Every node id that ever existed, with its interest.
    pub fn interests(&self) -> BTreeMap<NodeId, InterestSet> {
        let mut out: BTreeMap<NodeId, InterestSet> = self
            .header
            .nodes
            .iter()
            .map(|n| (n.id.clone(), n.interest.clone()))
            .collect();
        for rec in &self.events {
            if let TraceEvent::NodeRetired { new, interest, .. } = &rec.event {
                out.insert(new.clone(), interest.clone());
            }
        }
        out
    }
}
