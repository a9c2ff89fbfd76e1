//! Compares what a receiver actually observed with the guarantee table.

use std::collections::BTreeSet;

use meshsync_core::model::{InterestSet, NodeId, OpId, Region};
use meshsync_core::sim::{builtin_scenario, run_scenario, Scenario};
use meshsync_core::trace::Trace;
use meshsync_core::verify::{
    build_execution, check_atomicity, check_convergence, check_intersection_atomicity, check_intersection_cc,
    expected_guarantees, replay, GuaranteeRow,
};

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Breaches {
    pub ia_local: usize,
    pub ia_remote: usize,
    pub icc_single: usize,
    pub icc_multi: usize,
    pub convergence: usize,
    /// Classic atomicity violations at the receiver on transactions from a
    /// third node; these show the scoped entries are not vacuous.
    pub classic_remote: usize,
    /// Intersection violations at the receiver that fall outside the predicted scope.
    pub out_of_scope: usize,
}

impl Breaches {
    pub fn in_scope(&self) -> usize {
        self.ia_local + self.ia_remote + self.icc_single + self.icc_multi + self.convergence
    }
}

/// Violations at `R` attributed to the `L -> R` direction.
pub fn table_breaches(trace: &Trace) -> (GuaranteeRow, Breaches) {
    let (l, r) = (NodeId::from("L"), NodeId::from("R"));
    let interests = trace.interests();
    let row = expected_guarantees(&interests[&l], &interests[&r]).expect("non-disjoint");
    let r_region = interests[&r].effective();
    let e = build_execution(trace).unwrap();
    let target = |id: &OpId| e.op(id).unwrap().target.clone();
    let delivered = |id: &OpId| id.origin != r;
    let mut b = Breaches::default();

    for v in check_intersection_atomicity(&e, &interests) {
        if v.node.as_ref() != Some(&r) || !delivered(&v.ops[0]) {
            continue;
        }
        let local = v.txns[0].origin == l;
        let scope = if local { &row.ia_local_txn } else { &row.ia_remote_txn };
        if scope.within(&r_region).contains(&target(&v.ops[1])) {
            if local {
                b.ia_local += 1;
            } else {
                b.ia_remote += 1;
            }
        } else {
            b.out_of_scope += 1;
        }
    }
    for v in check_intersection_cc(&e, &interests) {
        if v.node.as_ref() != Some(&r) || !delivered(&v.ops[1]) {
            continue;
        }
        let single = target(&v.ops[0]) == target(&v.ops[1]);
        let scope = if single { &row.icc_single } else { &row.icc_multi };
        if scope.within(&r_region).contains(&target(&v.ops[0])) {
            if single {
                b.icc_single += 1;
            } else {
                b.icc_multi += 1;
            }
        } else {
            b.out_of_scope += 1;
        }
    }
    b.convergence = check_convergence(trace, &interests).unwrap().len();
    b.classic_remote = check_atomicity(&e)
        .iter()
        .filter(|v| v.node.as_ref() == Some(&r) && v.txns[0].origin != l && v.txns[0].origin != r)
        .count();
    (row, b)
}

/// After the final checkpoint every pair of live nodes has applied the same
/// ops on its shared region and holds the same state there.
pub fn fully_propagated(trace: &Trace, label: &str) -> Result<(), String> {
    let replayed = replay(trace).map_err(|e| e.to_string())?;
    let cp = replayed
        .checkpoints
        .iter()
        .find(|c| c.label == label)
        .ok_or("missing checkpoint")?;
    let targets: std::collections::BTreeMap<OpId, meshsync_core::model::ObjectPath> = trace
        .events
        .iter()
        .filter_map(|r| match &r.event {
            meshsync_core::trace::TraceEvent::LocalCommit { ops, .. } => Some(ops.clone()),
            _ => None,
        })
        .flatten()
        .map(|o| (o.id, o.target))
        .collect();
    let nodes: Vec<_> = cp.replicas.iter().collect();
    for (i, (na, ra)) in nodes.iter().enumerate() {
        for (nb, rb) in &nodes[i + 1..] {
            let shared: Region = ra.interest.effective().intersection(&rb.interest.effective());
            if shared.is_empty() {
                continue;
            }
            let on = |set: &BTreeSet<OpId>| -> BTreeSet<OpId> {
                set.iter().filter(|id| shared.contains(&targets[*id])).cloned().collect()
            };
            if on(&ra.applied) != on(&rb.applied) {
                return Err(format!("{na} and {nb} applied different ops on {shared}"));
            }
            if ra.store.digest(&shared) != rb.store.digest(&shared) {
                return Err(format!("{na} and {nb} differ on {shared}"));
            }
        }
    }
    Ok(())
}

/// The relay scenario with the middle node widened to its neighbors' interest.
pub fn widened_relay() -> Scenario {
    let mut s = builtin_scenario("n1n2n3").unwrap();
    s.nodes[1].subscriptions = Region::parse(["s1", "s2"]).unwrap();
    s
}

pub fn ia_count_at(trace: &Trace, node: &str) -> usize {
    let e = build_execution(trace).unwrap();
    check_intersection_atomicity(&e, &trace.interests())
        .iter()
        .filter(|v| v.node.as_ref().map(|n| n.as_str()) == Some(node))
        .count()
}

pub fn run(s: &Scenario) -> Trace {
    run_scenario(s).unwrap_or_else(|e| panic!("{}: {e}", s.name))
}

pub fn interests_of(s: &Scenario) -> std::collections::BTreeMap<NodeId, InterestSet> {
    s.interests()
}
