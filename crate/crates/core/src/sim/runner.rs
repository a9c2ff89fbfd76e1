use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::crdt::Schema;
use crate::model::{InterestSet, NodeId, Region};
use crate::node::{Change, NodeError, NodeState};
use crate::sync::{run_session, SessionConfig, SyncError};
use crate::trace::{NodeDecl, Trace, TraceEvent, TraceHeader, TRACE_FORMAT};

use super::scenario::{Scenario, ScenarioEvent};
use super::topology::TopologySnapshot;

#[derive(Debug, Error)]
pub enum SimErrorKind {
    #[error("event #{event}: {source}")]
    Node {
        event: usize,
        #[source]
        source: NodeError,
    },
    #[error("event #{event}: {source}")]
    Sync {
        event: usize,
        #[source]
        source: SyncError,
    },
    #[error("event #{event}: {message}")]
    Invalid { event: usize, message: String },
}

/// A failed run, with everything recorded up to the failure.
#[derive(Debug, Error)]
#[error("{kind}")]
pub struct SimError {
    pub kind: SimErrorKind,
    pub partial: Box<Trace>,
}

/// Deterministic scenario executor. Scenario node names stay stable across
/// interest changes; `alias` maps each to its current incarnation.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    cfg: SessionConfig,
    schema: Arc<Schema>,
    nodes: BTreeMap<NodeId, NodeState>,
    incarnations: BTreeMap<NodeId, u32>,
    topology: TopologySnapshot,
    rng: ChaCha8Rng,
    next_session: u64,
    trace: Trace,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        let schema = Arc::new(scenario.schema.clone());
        let nodes = scenario
            .nodes
            .iter()
            .map(|n| (n.id.clone(), NodeState::new(n.id.clone(), n.interest(), schema.clone())))
            .collect();
        let header = TraceHeader {
            format: TRACE_FORMAT,
            scenario: scenario.name.clone(),
            digest: scenario.digest(),
            seed: scenario.seed,
            mode: scenario.mode,
            nodes: scenario
                .nodes
                .iter()
                .map(|n| NodeDecl {
                    id: n.id.clone(),
                    interest: n.interest(),
                })
                .collect(),
            schema: scenario.schema.clone(),
        };
        Simulation {
            scenario,
            cfg: SessionConfig::new(scenario.mode),
            schema,
            nodes,
            incarnations: BTreeMap::new(),
            topology: TopologySnapshot::new(),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            next_session: 1,
            trace: Trace::new(header),
        }
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, NodeState> {
        &self.nodes
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    fn concrete(&self, name: &NodeId) -> NodeId {
        self.nodes[name].id().clone()
    }

    fn fail(&self, kind: SimErrorKind) -> SimError {
        SimError {
            kind,
            partial: Box::new(self.trace.clone()),
        }
    }

    pub fn run(mut self) -> Result<Trace, SimError> {
        for (i, ev) in self.scenario.events.iter().enumerate() {
            self.step(i, ev)?;
        }
        Ok(self.trace)
    }

    fn step(&mut self, i: usize, ev: &ScenarioEvent) -> Result<(), SimError> {
        match ev {
            ScenarioEvent::Txn { node, label, body } => {
                let node_state = self.nodes.get_mut(node).ok_or_else(|| SimErrorKind::Invalid {
                    event: i,
                    message: format!("unknown node {node}"),
                });
                let node_state = match node_state {
                    Ok(n) => n,
                    Err(kind) => return Err(self.fail(kind)),
                };
                let mut changes: Vec<(crate::model::ObjectPath, Change)> = Vec::with_capacity(body.len());
                for m in body {
                    match m.to_change() {
                        Some(c) => changes.push((m.path.clone(), c)),
                        None => {
                            let kind = SimErrorKind::Invalid {
                                event: i,
                                message: format!("add to {} needs an integer", m.path),
                            };
                            return Err(self.fail(kind));
                        }
                    }
                }
                match node_state.execute_local_txn(&changes) {
                    Ok(txn) => {
                        let ev = TraceEvent::LocalCommit {
                            node: txn.origin.clone(),
                            txn_id: txn.id.clone(),
                            label: label.clone(),
                            op_ids: txn.ops.iter().map(|o| o.id.clone()).collect(),
                            ops: txn.ops,
                        };
                        self.trace.push(ev);
                    }
                    Err(source) => return Err(self.fail(SimErrorKind::Node { event: i, source })),
                }
            }
            ScenarioEvent::Connect { a, b } => {
                self.topology.connect(a, b);
                let ev = TraceEvent::Connect {
                    a: self.concrete(a),
                    b: self.concrete(b),
                };
                self.trace.push(ev);
            }
            ScenarioEvent::Disconnect { a, b } => {
                self.topology.disconnect(a, b);
                let ev = TraceEvent::Disconnect {
                    a: self.concrete(a),
                    b: self.concrete(b),
                };
                self.trace.push(ev);
            }
            ScenarioEvent::Sync { a, b } => {
                if !self.topology.contains(a, b) {
                    let kind = SimErrorKind::Invalid {
                        event: i,
                        message: format!("sync between unconnected {a} and {b}"),
                    };
                    return Err(self.fail(kind));
                }
                self.sync(i, a, b)?;
            }
            ScenarioEvent::SyncRandom { count } => {
                for _ in 0..*count {
                    let edges: Vec<(NodeId, NodeId)> = self.topology.edges.iter().cloned().collect();
                    if edges.is_empty() {
                        break;
                    }
                    let (a, b) = edges[self.rng.random_range(0..edges.len())].clone();
                    self.sync(i, &a, &b)?;
                }
            }
            ScenarioEvent::ChangeInterest {
                node,
                subscriptions,
                permissions,
            } => {
                let interest = InterestSet::new(subscriptions.clone(), permissions.clone());
                let k = self.incarnations.entry(node.clone()).or_insert(1);
                *k += 1;
                let new_id = NodeId::new(format!("{node}#{k}"));
                let old = &self.nodes[node];
                let old_id = old.id().clone();
                let fresh = NodeState::new(new_id.clone(), interest.clone(), self.schema.clone());
                self.nodes.insert(node.clone(), fresh);
                self.trace.push(TraceEvent::NodeRetired {
                    old: old_id,
                    new: new_id,
                    interest,
                });
            }
            ScenarioEvent::Checkpoint { label } => {
                let hashes = self
                    .nodes
                    .values()
                    .map(|n| (n.id().clone(), n.state_hash(&Region::all())))
                    .collect();
                self.trace.push(TraceEvent::Checkpoint {
                    label: label.clone(),
                    hashes,
                });
            }
        }
        Ok(())
    }

    fn sync(&mut self, i: usize, a: &NodeId, b: &NodeId) -> Result<(), SimError> {
        let session_id = self.next_session;
        self.next_session += 1;
        let mut na = self.nodes.remove(a).expect("known node");
        let mut nb = self.nodes.remove(b).expect("known node");
        let result = run_session(&mut na, &mut nb, &self.cfg, session_id);
        let (ida, idb) = (na.id().clone(), nb.id().clone());
        self.nodes.insert(a.clone(), na);
        self.nodes.insert(b.clone(), nb);
        match result {
            Ok(outcome) => {
                for ev in outcome.events(session_id, &ida, &idb) {
                    self.trace.push(ev);
                }
                Ok(())
            }
            Err(source) => Err(self.fail(SimErrorKind::Sync { event: i, source })),
        }
    }
}

/// Runs a scenario to completion, producing its trace.
pub fn run_scenario(scenario: &Scenario) -> Result<Trace, SimError> {
    Simulation::new(scenario).run()
}
