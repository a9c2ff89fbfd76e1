//! Seeded generators for scenarios and raw traces.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use meshsync_core::crdt::{CrdtMutation, Scalar, Schema, Timestamp, TypeTag};
use meshsync_core::model::{InterestSet, NodeId, ObjectPath, OpId, Operation, Region, TransactionId, VersionVector};
use meshsync_core::sim::{MutationKind, MutationSpec, NodeSpec, Scenario, ScenarioEvent};
use meshsync_core::sync::MetadataMode;
use meshsync_core::trace::{NodeDecl, Trace, TraceEvent, TraceHeader, TRACE_FORMAT};

pub const REGION_POOL: [&str; 6] = ["s1", "s2", "s3", "s1.a", "s2.b", "r"];
pub const PATH_POOL: [&str; 8] = ["s1.a.x", "s1.b.y", "s2.a.x", "s2.b.y", "s3.a.x", "s3.c", "r.p", "r.q"];

pub fn schema() -> Schema {
    let mut s = Schema::new();
    for p in ["s1", "s2", "s3", "s4"] {
        s.declare(p.parse().unwrap(), TypeTag::Counter, None);
    }
    s.declare("s3.c".parse().unwrap(), TypeTag::Counter, Some(Scalar::Int(10)));
    s.declare("r".parse().unwrap(), TypeTag::Register, Some(Scalar::Int(0)));
    s
}

pub fn region(items: &[&str]) -> Region {
    Region::parse(items).unwrap()
}

pub fn random_region<R: Rng>(rng: &mut R) -> Region {
    if rng.random_bool(0.1) {
        return Region::all();
    }
    loop {
        let picked: Vec<&str> = REGION_POOL.iter().copied().filter(|_| rng.random_bool(0.4)).collect();
        if !picked.is_empty() {
            return region(&picked);
        }
    }
}

fn mutation_for<R: Rng>(rng: &mut R, path: &str) -> MutationSpec {
    if path.starts_with('r') {
        MutationSpec {
            path: path.parse().unwrap(),
            kind: MutationKind::Write,
            value: Scalar::Int(rng.random_range(0..100)),
        }
    } else {
        let mut d = rng.random_range(-3..=3);
        if d == 0 {
            d = 1;
        }
        MutationSpec {
            path: path.parse().unwrap(),
            kind: MutationKind::Add,
            value: Scalar::Int(d),
        }
    }
}

/// 1 to 3 distinct mutations inside `within`, or `None` if nothing fits.
pub fn random_body<R: Rng>(rng: &mut R, within: &Region, pool: &[&str]) -> Option<Vec<MutationSpec>> {
    let fitting: Vec<&str> = pool
        .iter()
        .copied()
        .filter(|p| within.contains(&p.parse::<ObjectPath>().unwrap()))
        .collect();
    if fitting.is_empty() {
        return None;
    }
    let k = rng.random_range(1..=fitting.len().min(3));
    let chosen: Vec<&str> = fitting.choose_multiple(rng, k).copied().collect();
    Some(chosen.into_iter().map(|p| mutation_for(rng, p)).collect())
}

pub fn node_id(i: usize) -> NodeId {
    NodeId::new(format!("N{i}"))
}

pub fn txn(node: &NodeId, body: Vec<MutationSpec>) -> ScenarioEvent {
    ScenarioEvent::Txn {
        node: node.clone(),
        label: None,
        body,
    }
}

pub fn sync(a: &NodeId, b: &NodeId) -> ScenarioEvent {
    ScenarioEvent::Sync { a: a.clone(), b: b.clone() }
}

pub fn connect(a: &NodeId, b: &NodeId) -> ScenarioEvent {
    ScenarioEvent::Connect { a: a.clone(), b: b.clone() }
}

pub fn scenario(name: &str, nodes: Vec<(NodeId, Region)>, mode: MetadataMode, events: Vec<ScenarioEvent>) -> Scenario {
    Scenario {
        name: name.to_string(),
        description: String::new(),
        nodes: nodes
            .into_iter()
            .map(|(id, r)| NodeSpec {
                id,
                subscriptions: r,
                permissions: Region::all(),
            })
            .collect(),
        schema: schema(),
        mode,
        seed: 0,
        footprints: None,
        events,
    }
}

/// Random interests, a random edge set, and interleaved commits and syncs
/// until about `op_budget` operations exist.
pub fn random_scenario<R: Rng>(rng: &mut R, n: usize, op_budget: usize, mode: MetadataMode) -> Scenario {
    let ids: Vec<NodeId> = (0..n).map(node_id).collect();
    let regions: Vec<Region> = ids.iter().map(|_| random_region(rng)).collect();
    let mut events = Vec::new();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.7) {
                events.push(connect(&ids[i], &ids[j]));
                edges.push((i, j));
            }
        }
    }
    let mut ops = 0;
    let mut steps = 0;
    while ops < op_budget && steps < op_budget * 4 {
        steps += 1;
        if edges.is_empty() || rng.random_bool(0.5) {
            let k = rng.random_range(0..n);
            let room = op_budget - ops;
            if let Some(mut body) = random_body(rng, &regions[k], &PATH_POOL) {
                body.truncate(room);
                ops += body.len();
                events.push(txn(&ids[k], body));
            }
        } else {
            let &(i, j) = edges.choose(rng).unwrap();
            if rng.random_bool(0.5) {
                events.push(sync(&ids[i], &ids[j]));
            } else {
                events.push(sync(&ids[j], &ids[i]));
            }
        }
    }
    events.push(ScenarioEvent::Checkpoint { label: "end".into() });
    scenario("random", ids.into_iter().zip(regions).collect(), mode, events)
}

/// A trace that ignores the protocol: ops become visible at arbitrary nodes
/// in arbitrary order. Only meaningful for the visibility checkers.
pub fn random_raw_trace<R: Rng>(rng: &mut R, n: usize, op_budget: usize) -> Trace {
    let ids: Vec<NodeId> = (0..n).map(node_id).collect();
    let interests: BTreeMap<NodeId, InterestSet> =
        ids.iter().map(|id| (id.clone(), InterestSet::subscribed(random_region(rng)))).collect();
    let header = TraceHeader {
        format: TRACE_FORMAT,
        scenario: "raw".into(),
        digest: String::new(),
        seed: 0,
        mode: MetadataMode::IntersectionOnly,
        nodes: ids
            .iter()
            .map(|id| NodeDecl {
                id: id.clone(),
                interest: interests[id].clone(),
            })
            .collect(),
        schema: schema(),
    };
    let mut trace = Trace::new(header);
    let mut committed: Vec<(OpId, NodeId)> = Vec::new();
    let mut visible: BTreeMap<NodeId, Vec<OpId>> = BTreeMap::new();
    let mut seq: BTreeMap<NodeId, u64> = BTreeMap::new();
    let mut txn_counter: BTreeMap<NodeId, u64> = BTreeMap::new();
    let mut lamport = 0;
    while committed.len() < op_budget {
        if committed.is_empty() || rng.random_bool(0.45) {
            let node = ids.choose(rng).unwrap().clone();
            let k = rng.random_range(1..=3).min(op_budget - committed.len());
            let counter = {
                let c = txn_counter.entry(node.clone()).or_insert(0);
                *c += 1;
                *c
            };
            let txn_id = TransactionId::new(node.clone(), counter);
            lamport += 1;
            let mut ops = Vec::new();
            for _ in 0..k {
                let s = seq.entry(node.clone()).or_insert(0);
                *s += 1;
                let target: ObjectPath = PATH_POOL.choose(rng).unwrap().parse().unwrap();
                let mutation = if target.to_string().starts_with('r') {
                    CrdtMutation::RegisterWrite {
                        value: Scalar::Int(rng.random_range(0..9)),
                        ts: Timestamp::new(lamport, node.clone()),
                    }
                } else {
                    CrdtMutation::CounterAdd { delta: 1 }
                };
                let mut deps = VersionVector::new();
                deps.set(node.clone(), *s - 1);
                ops.push(Operation {
                    id: OpId::new(node.clone(), *s),
                    txn: txn_id.clone(),
                    target,
                    mutation,
                    deps,
                    lamport,
                });
            }
            for o in &ops {
                committed.push((o.id.clone(), node.clone()));
                visible.entry(node.clone()).or_default().push(o.id.clone());
            }
            trace.push(TraceEvent::LocalCommit {
                node: node.clone(),
                txn_id,
                label: None,
                op_ids: ops.iter().map(|o| o.id.clone()).collect(),
                ops,
            });
        } else {
            let node = ids.choose(rng).unwrap().clone();
            let seen = visible.entry(node.clone()).or_default();
            let mut fresh: Vec<OpId> = committed
                .iter()
                .map(|(id, _)| id.clone())
                .filter(|id| !seen.contains(id))
                .collect();
            if fresh.is_empty() {
                continue;
            }
            fresh.shuffle(rng);
            let k = rng.random_range(1..=fresh.len().min(4));
            fresh.truncate(k);
            seen.extend(fresh.iter().cloned());
            trace.push(TraceEvent::RemoteApply {
                node,
                session_id: 0,
                op_ids: fresh,
                header_ids: vec![],
            });
        }
    }
    trace
}

/// Interests for `L` and `R` in the requested relation, by rejection sampling.
pub fn regions_in_relation<R: Rng>(rng: &mut R, want: meshsync_core::model::RegionRelation) -> (Region, Region) {
    loop {
        let l = random_region(rng);
        let r = random_region(rng);
        if l.relation(&r) == want && !l.is_all() && !r.is_all() {
            return (l, r);
        }
    }
}

/// `X` holds everything and talks only to `L`; `L` talks to `R`. All three
/// commit transactions in their own interest.
pub fn table_scenario<R: Rng>(rng: &mut R, l: Region, r: Region) -> Scenario {
    let (x, ln, rn) = (NodeId::from("X"), NodeId::from("L"), NodeId::from("R"));
    let regions = [Region::all(), l, r];
    let ids = [x.clone(), ln.clone(), rn.clone()];
    let mut events = vec![connect(&x, &ln), connect(&ln, &rn)];
    let mut ops = 0;
    while ops < 24 {
        match rng.random_range(0..5) {
            0 | 1 => {
                let k = rng.random_range(0..3);
                if let Some(body) = random_body(rng, &regions[k], &PATH_POOL) {
                    ops += body.len();
                    events.push(txn(&ids[k], body));
                }
            }
            2 => events.push(sync(&x, &ln)),
            _ => events.push(sync(&ln, &rn)),
        }
    }
    events.push(sync(&x, &ln));
    events.push(sync(&ln, &rn));
    events.push(ScenarioEvent::Checkpoint { label: "end".into() });
    scenario("table", ids.into_iter().zip(regions).collect(), MetadataMode::IntersectionOnly, events)
}

/// Activity inside two random partitions, then a heal into a complete graph
/// followed by enough all-pairs rounds to propagate everything.
pub fn partition_heal_scenario<R: Rng>(rng: &mut R, n: usize) -> Scenario {
    let ids: Vec<NodeId> = (0..n).map(node_id).collect();
    let regions: Vec<Region> = ids.iter().map(|_| random_region(rng)).collect();
    let mut events = Vec::new();
    let mut txns = 0;
    for phase in 0..2 {
        let side: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        for i in 0..n {
            for j in i + 1..n {
                if side[i] == side[j] {
                    events.push(connect(&ids[i], &ids[j]));
                } else if phase > 0 {
                    events.push(ScenarioEvent::Disconnect { a: ids[i].clone(), b: ids[j].clone() });
                }
            }
        }
        for _ in 0..rng.random_range(4..12) {
            let i = rng.random_range(0..n);
            if rng.random_bool(0.5) {
                if let Some(body) = random_body(rng, &regions[i], &PATH_POOL) {
                    events.push(txn(&ids[i], body));
                    txns += 1;
                }
            } else {
                let peers: Vec<usize> = (0..n).filter(|&j| j != i && side[j] == side[i]).collect();
                if let Some(&j) = peers.choose(rng) {
                    events.push(sync(&ids[i], &ids[j]));
                }
            }
        }
        events.push(ScenarioEvent::Checkpoint { label: format!("partitioned-{phase}") });
    }
    for i in 0..n {
        for j in i + 1..n {
            events.push(connect(&ids[i], &ids[j]));
        }
    }
    for _ in 0..txns + 2 {
        for i in 0..n {
            for j in i + 1..n {
                events.push(sync(&ids[i], &ids[j]));
            }
        }
    }
    events.push(ScenarioEvent::Checkpoint { label: "healed".into() });
    scenario(
        "partition-heal",
        ids.into_iter().zip(regions).collect(),
        MetadataMode::MetadataEverywhere,
        events,
    )
}

/// A random tree whose interests only widen toward the root; syncs follow
/// tree edges.
pub fn widening_forest_scenario<R: Rng>(rng: &mut R, n: usize) -> Scenario {
    let ids: Vec<NodeId> = (0..n).map(node_id).collect();
    let mut regions: Vec<Region> = vec![random_region(rng)];
    let mut edges = Vec::new();
    for i in 1..n {
        let p = rng.random_range(0..i);
        let narrowed = regions[p].intersection(&random_region(rng));
        regions.push(if narrowed.is_empty() { regions[p].clone() } else { narrowed });
        edges.push((p, i));
    }
    let mut events: Vec<ScenarioEvent> = edges.iter().map(|&(a, b)| connect(&ids[a], &ids[b])).collect();
    for _ in 0..40 {
        if rng.random_bool(0.4) {
            let i = rng.random_range(0..n);
            if let Some(body) = random_body(rng, &regions[i], &PATH_POOL) {
                events.push(txn(&ids[i], body));
            }
        } else if let Some(&(a, b)) = edges.choose(rng) {
            events.push(sync(&ids[a], &ids[b]));
        }
    }
    events.push(ScenarioEvent::Checkpoint { label: "end".into() });
    scenario("widening-forest", ids.into_iter().zip(regions).collect(), MetadataMode::IntersectionOnly, events)
}

pub const GROUP_REGIONS: [&[&str]; 2] = [&["s1", "s2"], &["s3", "r"]];

/// Nodes hold exactly one footprint group each, or are full relay hubs that
/// never originate transactions. Edges are arbitrary.
pub fn interest_config_scenario<R: Rng>(rng: &mut R, n: usize) -> Scenario {
    let ids: Vec<NodeId> = (0..n).map(node_id).collect();
    let mut roles: Vec<Option<usize>> = (0..n)
        .map(|_| if rng.random_bool(0.25) { None } else { Some(rng.random_range(0..2)) })
        .collect();
    roles[0] = Some(0);
    let regions: Vec<Region> = roles
        .iter()
        .map(|r| match r {
            Some(g) => region(GROUP_REGIONS[*g]),
            None => Region::all(),
        })
        .collect();
    let mut events = Vec::new();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.5) {
                events.push(connect(&ids[i], &ids[j]));
                edges.push((i, j));
            }
        }
    }
    for _ in 0..40 {
        if edges.is_empty() || rng.random_bool(0.4) {
            let i = rng.random_range(0..n);
            if roles[i].is_none() {
                continue;
            }
            if let Some(body) = random_body(rng, &regions[i], &PATH_POOL) {
                events.push(txn(&ids[i], body));
            }
        } else {
            let &(a, b) = edges.choose(rng).unwrap();
            events.push(sync(&ids[a], &ids[b]));
        }
    }
    events.push(ScenarioEvent::Checkpoint { label: "end".into() });
    let mut s = scenario("interest-config", ids.into_iter().zip(regions).collect(), MetadataMode::IntersectionOnly, events);
    s.footprints = Some(
        GROUP_REGIONS
            .iter()
            .map(|g| meshsync_core::sim::Footprint {
                name: None,
                writes: region(g),
                deps: region(g),
            })
            .collect(),
    );
    s
}
