//! Shared fixtures for the benchmarks.

use meshsync_core::crdt::{Scalar, Schema, TypeTag};
use meshsync_core::model::{NodeId, Region};
use meshsync_core::sim::{MutationKind, MutationSpec, NodeSpec, Scenario, ScenarioEvent};
use meshsync_core::sync::MetadataMode;

const SHARDS: [&str; 4] = ["a", "b", "c", "d"];

/// `n` nodes on a ring, each subscribed to two adjacent shards. Every round
/// each node commits one two-op transaction and syncs with its successor.
pub fn ring(n: usize, rounds: usize, mode: MetadataMode) -> Scenario {
    let ids: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("R{i}"))).collect();
    let shards = |i: usize| [SHARDS[i % SHARDS.len()], SHARDS[(i + 1) % SHARDS.len()]];
    let nodes = ids
        .iter()
        .enumerate()
        .map(|(i, id)| NodeSpec {
            id: id.clone(),
            subscriptions: Region::parse(shards(i)).unwrap(),
            permissions: Region::all(),
        })
        .collect();
    let mut schema = Schema::new();
    for s in SHARDS {
        schema.declare(s.parse().unwrap(), TypeTag::Counter, None);
    }
    let mut events = Vec::new();
    for i in 0..n {
        events.push(ScenarioEvent::Connect {
            a: ids[i].clone(),
            b: ids[(i + 1) % n].clone(),
        });
    }
    for round in 0..rounds {
        for (i, id) in ids.iter().enumerate() {
            let body = shards(i)
                .iter()
                .map(|s| MutationSpec {
                    path: format!("{s}.k{}", round % 3).parse().unwrap(),
                    kind: MutationKind::Add,
                    value: Scalar::Int(1),
                })
                .collect();
            events.push(ScenarioEvent::Txn {
                node: id.clone(),
                label: None,
                body,
            });
        }
        for i in 0..n {
            events.push(ScenarioEvent::Sync {
                a: ids[i].clone(),
                b: ids[(i + 1) % n].clone(),
            });
        }
    }
    events.push(ScenarioEvent::Checkpoint { label: "end".into() });
    Scenario {
        name: format!("ring-{n}x{rounds}"),
        description: String::new(),
        nodes,
        schema,
        mode,
        seed: 0,
        footprints: None,
        events,
    }
}
