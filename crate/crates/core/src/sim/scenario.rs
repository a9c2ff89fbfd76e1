use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crdt::{Scalar, Schema, TypeTag};
use crate::model::{InterestSet, NodeId, ObjectPath, Region};
use crate::node::Change;
use crate::sync::MetadataMode;

use super::topology::TopologySnapshot;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario{}: {message}", .event.map(|i| format!(" (event #{i})")).unwrap_or_default())]
    Validation { event: Option<usize>, message: String },
}

fn invalid(event: Option<usize>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        event,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub subscriptions: Region,
    #[serde(default = "Region::all")]
    pub permissions: Region,
}

impl NodeSpec {
    pub fn interest(&self) -> InterestSet {
        InterestSet::new(self.subscriptions.clone(), self.permissions.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MutationKind {
    Add,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationSpec {
    pub path: ObjectPath,
    pub kind: MutationKind,
    pub value: Scalar,
}

impl MutationSpec {
    pub fn to_change(&self) -> Option<Change> {
        match (self.kind, &self.value) {
            (MutationKind::Add, Scalar::Int(d)) => Some(Change::Add(*d)),
            (MutationKind::Add, _) => None,
            (MutationKind::Write, v) => Some(Change::Write(v.clone())),
        }
    }
}

/// Declared write and causal-dependency regions of one transaction class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub writes: Region,
    pub deps: Region,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioEvent {
    Txn {
        node: NodeId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        body: Vec<MutationSpec>,
    },
    Connect {
        a: NodeId,
        b: NodeId,
    },
    Disconnect {
        a: NodeId,
        b: NodeId,
    },
    Sync {
        a: NodeId,
        b: NodeId,
    },
    SyncRandom {
        count: u32,
    },
    ChangeInterest {
        node: NodeId,
        subscriptions: Region,
        #[serde(default = "Region::all")]
        permissions: Region,
    },
    Checkpoint {
        label: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub nodes: Vec<NodeSpec>,
    pub schema: Schema,
    #[serde(default)]
    pub mode: MetadataMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footprints: Option<Vec<Footprint>>,
    pub events: Vec<ScenarioEvent>,
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn valid_node_name(id: &NodeId) -> bool {
    let s = id.as_str();
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

fn edge(a: &NodeId, b: &NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut interests: BTreeMap<NodeId, InterestSet> = BTreeMap::new();
        for n in &self.nodes {
            if !valid_node_name(&n.id) {
                return Err(invalid(None, format!("invalid node id {:?}", n.id.as_str())));
            }
            if interests.insert(n.id.clone(), n.interest()).is_some() {
                return Err(invalid(None, format!("duplicate node id {}", n.id)));
            }
        }
        for (prefix, entry) in self.schema.entries() {
            if entry.tag == TypeTag::Counter && !matches!(entry.initial, None | Some(Scalar::Int(_))) {
                return Err(invalid(None, format!("counter {prefix} needs an integer initial value")));
            }
        }

        let known = |i: usize, id: &NodeId| -> Result<(), ScenarioError> {
            if interests.contains_key(id) {
                Ok(())
            } else {
                Err(invalid(Some(i), format!("unknown node {id}")))
            }
        };
        let mut current = interests.clone();
        let mut edges: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        for (i, ev) in self.events.iter().enumerate() {
            match ev {
                ScenarioEvent::Txn { node, body, .. } => {
                    known(i, node)?;
                    if body.is_empty() {
                        return Err(invalid(Some(i), "transaction body is empty"));
                    }
                    let interest = &current[node];
                    let mut written = BTreeSet::new();
                    for m in body {
                        let entry = self
                            .schema
                            .lookup(&m.path)
                            .ok_or_else(|| invalid(Some(i), format!("undeclared object {}", m.path)))?;
                        let wanted = match m.kind {
                            MutationKind::Add => TypeTag::Counter,
                            MutationKind::Write => TypeTag::Register,
                        };
                        if entry.tag != wanted {
                            return Err(invalid(
                                Some(i),
                                format!("{} is a {}, cannot {:?}", m.path, entry.tag, m.kind),
                            ));
                        }
                        if m.to_change().is_none() {
                            return Err(invalid(Some(i), format!("add to {} needs an integer", m.path)));
                        }
                        if !interest.contains(&m.path) {
                            return Err(invalid(
                                Some(i),
                                format!("{} is outside the interest of {node}", m.path),
                            ));
                        }
                        if m.kind == MutationKind::Write && !written.insert(&m.path) {
                            return Err(invalid(Some(i), format!("{} written twice", m.path)));
                        }
                    }
                }
                ScenarioEvent::Connect { a, b } | ScenarioEvent::Disconnect { a, b } | ScenarioEvent::Sync { a, b } => {
                    known(i, a)?;
                    known(i, b)?;
                    if a == b {
                        return Err(invalid(Some(i), format!("self edge at {a}")));
                    }
                    let e = edge(a, b);
                    match ev {
                        ScenarioEvent::Connect { .. } => {
                            edges.insert(e);
                        }
                        ScenarioEvent::Disconnect { .. } => {
                            edges.remove(&e);
                        }
                        _ => {
                            if !edges.contains(&e) {
                                return Err(invalid(Some(i), format!("sync between unconnected {a} and {b}")));
                            }
                        }
                    }
                }
                ScenarioEvent::SyncRandom { .. } => {}
                ScenarioEvent::ChangeInterest {
                    node,
                    subscriptions,
                    permissions,
                } => {
                    known(i, node)?;
                    current.insert(node.clone(), InterestSet::new(subscriptions.clone(), permissions.clone()));
                }
                ScenarioEvent::Checkpoint { .. } => {}
            }
        }
        Ok(())
    }

    /// Canonical JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Hex SHA-256 of the canonical compact rendering.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn interests(&self) -> BTreeMap<NodeId, InterestSet> {
        self.nodes.iter().map(|n| (n.id.clone(), n.interest())).collect()
    }

    /// Every edge ever connected, by scenario node name.
    pub fn union_topology(&self) -> TopologySnapshot {
        let mut topo = TopologySnapshot::new();
        for ev in &self.events {
            if let ScenarioEvent::Connect { a, b } = ev {
                topo.connect(a, b);
            }
        }
        topo
    }

    /// Topology and interests right when checkpoint `label` is reached.
    pub fn state_at(&self, label: &str) -> Option<(TopologySnapshot, BTreeMap<NodeId, InterestSet>)> {
        let mut topo = TopologySnapshot::new();
        let mut interests = self.interests();
        for ev in &self.events {
            match ev {
                ScenarioEvent::Connect { a, b } => topo.connect(a, b),
                ScenarioEvent::Disconnect { a, b } => topo.disconnect(a, b),
                ScenarioEvent::ChangeInterest {
                    node,
                    subscriptions,
                    permissions,
                } => {
                    interests.insert(node.clone(), InterestSet::new(subscriptions.clone(), permissions.clone()));
                }
                ScenarioEvent::Checkpoint { label: l } if l == label => return Some((topo, interests)),
                _ => {}
            }
        }
        None
    }
}
