use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{classify_session, InterestSet, Region, RegionRelation};

/// The data over which a guarantee holds for one session direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "holds", content = "region", rename_all = "snake_case")]
pub enum Scope {
    Full,
    Scoped(Region),
}

impl Scope {
    /// The region a checker should enforce the guarantee on, given the
    /// receiver's own effective region.
    pub fn within(&self, receiver: &Region) -> Region {
        match self {
            Scope::Full => receiver.clone(),
            Scope::Scoped(r) => r.intersection(receiver),
        }
    }
}

/// Expected guarantees when a peer with `LSet` sends to one with `RSet`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuaranteeRow {
    pub relation: RegionRelation,
    pub ia_local_txn: Scope,
    pub ia_remote_txn: Scope,
    pub icc_single: Scope,
    pub icc_multi: Scope,
    pub convergence: Scope,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("interest sets are disjoint; no session takes place")]
pub struct DisjointSession;

pub fn expected_guarantees(lset: &InterestSet, rset: &InterestSet) -> Result<GuaranteeRow, DisjointSession> {
    let relation = classify_session(lset, rset);
    let (l, r) = (lset.effective(), rset.effective());
    let row = |ia_local, ia_remote, icc_multi| GuaranteeRow {
        relation,
        ia_local_txn: ia_local,
        ia_remote_txn: ia_remote,
        icc_single: Scope::Full,
        icc_multi,
        convergence: Scope::Full,
    };
    match relation {
        RegionRelation::Disjoint => Err(DisjointSession),
        RegionRelation::Equal | RegionRelation::ASupersetB => Ok(row(Scope::Full, Scope::Full, Scope::Full)),
        RegionRelation::ASubsetB => Ok(row(Scope::Full, Scope::Scoped(l.clone()), Scope::Scoped(l))),
        RegionRelation::Overlap => {
            let both = l.intersection(&r);
            Ok(row(Scope::Scoped(both.clone()), Scope::Scoped(both.clone()), Scope::Scoped(both)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(r: &[&str]) -> InterestSet {
        InterestSet::subscribed(Region::parse(r).unwrap())
    }

    #[test]
    fn table_columns() {
        let eq = expected_guarantees(&set(&["a"]), &set(&["a"])).unwrap();
        let sup = expected_guarantees(&set(&["a", "b"]), &set(&["a"])).unwrap();
        for row in [&eq, &sup] {
            assert!([&row.ia_local_txn, &row.ia_remote_txn, &row.icc_single, &row.icc_multi, &row.convergence]
                .iter()
                .all(|s| **s == Scope::Full));
        }

        let sub = expected_guarantees(&set(&["a"]), &set(&["a", "b"])).unwrap();
        assert_eq!(sub.ia_local_txn, Scope::Full);
        assert_eq!(sub.ia_remote_txn, Scope::Scoped(Region::parse(["a"]).unwrap()));
        assert_eq!(sub.icc_multi, Scope::Scoped(Region::parse(["a"]).unwrap()));

        let ov = expected_guarantees(&set(&["a", "b"]), &set(&["b", "c"])).unwrap();
        let b = Scope::Scoped(Region::parse(["b"]).unwrap());
        assert_eq!((&ov.ia_local_txn, &ov.ia_remote_txn, &ov.icc_multi), (&b, &b, &b));
        assert_eq!((&ov.icc_single, &ov.convergence), (&Scope::Full, &Scope::Full));

        assert_eq!(expected_guarantees(&set(&["a"]), &set(&["b"])), Err(DisjointSession));
    }
}
