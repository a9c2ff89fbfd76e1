//! Join-semilattice laws for the replicated types, usable from both the
//! property tests and the acceptance runner.

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use meshsync_core::crdt::{merge_state, CrdtState, LwwRegister, PnCounter, Scalar, Timestamp};
use meshsync_core::model::{NodeId, VersionVector};

const ORIGINS: [&str; 4] = ["A", "B", "C", "D"];

fn entries() -> impl Strategy<Value = BTreeMap<NodeId, u64>> {
    prop::collection::btree_map(prop::sample::select(&ORIGINS[..]).prop_map(NodeId::from), 0u64..8, 0..4)
}

pub fn counter() -> impl Strategy<Value = CrdtState> {
    (prop::sample::select(vec![0i64, 6, 20]), entries(), entries())
        .prop_map(|(base, inc, dec)| CrdtState::PnCounter(PnCounter { base, inc, dec }))
}

fn scalar() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        any::<bool>().prop_map(Scalar::Bool),
        (-3i64..3).prop_map(Scalar::Int),
        prop::sample::select(vec!["red", "white"]).prop_map(Scalar::from),
    ]
}

pub fn register() -> impl Strategy<Value = CrdtState> {
    (0u64..4, prop::sample::select(&ORIGINS[..]), scalar()).prop_map(|(lamport, origin, value)| {
        CrdtState::LwwRegister(LwwRegister {
            value,
            ts: Timestamp::new(lamport, origin),
        })
    })
}

pub fn version_vector() -> impl Strategy<Value = VersionVector> {
    entries().prop_map(|m| {
        let mut v = VersionVector::new();
        for (k, n) in m {
            v.set(k, n);
        }
        v
    })
}

fn join(a: &CrdtState, b: &CrdtState) -> CrdtState {
    merge_state(a, b).expect("same type")
}

fn below(a: &CrdtState, b: &CrdtState) -> bool {
    a.is_below(b).expect("same type")
}

/// Idempotence, commutativity, associativity, and that the join is the least
/// upper bound of its arguments.
pub fn state_laws(a: &CrdtState, b: &CrdtState, c: &CrdtState) -> Result<(), TestCaseError> {
    prop_assert_eq!(&join(a, a), a);
    prop_assert_eq!(join(a, b), join(b, a));
    prop_assert_eq!(join(&join(a, b), c), join(a, &join(b, c)));
    let ab = join(a, b);
    prop_assert!(below(a, &ab) && below(b, &ab));
    // anything above both is above the join
    if below(a, c) && below(b, c) {
        prop_assert!(below(&ab, c));
    }
    // nothing strictly below the join is above both
    for smaller in shrink_once(&ab) {
        prop_assert!(!(below(a, &smaller) && below(b, &smaller)), "{:?}", smaller);
    }
    Ok(())
}

/// States one step below `s` in the lattice order.
fn shrink_once(s: &CrdtState) -> Vec<CrdtState> {
    let mut out = Vec::new();
    if let CrdtState::PnCounter(c) = s {
        for (side, map) in [(0, &c.inc), (1, &c.dec)] {
            for (k, v) in map.iter().filter(|(_, v)| **v > 0) {
                let mut d = c.clone();
                let m = if side == 0 { &mut d.inc } else { &mut d.dec };
                m.insert(k.clone(), v - 1);
                out.push(CrdtState::PnCounter(d));
            }
        }
        let mut d = c.clone();
        d.base -= 1;
        out.push(CrdtState::PnCounter(d));
    }
    out
}

pub fn vv_laws(a: &VersionVector, b: &VersionVector, c: &VersionVector) -> Result<(), TestCaseError> {
    prop_assert_eq!(&a.merge(a), a);
    prop_assert_eq!(a.merge(b), b.merge(a));
    prop_assert_eq!(a.merge(b).merge(c), a.merge(&b.merge(c)));
    prop_assert!(a.leq(&a.merge(b)) && b.leq(&a.merge(b)));
    if a.leq(c) && b.leq(c) {
        prop_assert!(a.merge(b).leq(c));
    }
    Ok(())
}

/// Runs every law over `cases` generated triples per type.
pub fn run_all(cases: u32) -> Result<(), String> {
    let cfg = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new(cfg.clone());
    runner
        .run(&(counter(), counter(), counter()), |(a, b, c)| state_laws(&a, &b, &c))
        .map_err(|e| format!("counter: {e}"))?;
    let mut runner = TestRunner::new(cfg.clone());
    runner
        .run(&(register(), register(), register()), |(a, b, c)| state_laws(&a, &b, &c))
        .map_err(|e| format!("register: {e}"))?;
    let mut runner = TestRunner::new(cfg);
    runner
        .run(&(version_vector(), version_vector(), version_vector()), |(a, b, c)| {
            vv_laws(&a, &b, &c)
        })
        .map_err(|e| format!("version vector: {e}"))?;
    Ok(())
}
