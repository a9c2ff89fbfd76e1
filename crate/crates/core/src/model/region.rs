use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::path::{ObjectPath, PathError};

/// Token used in textual region lists for "every path".
pub const ALL_TOKEN: &str = "*";

/// A set of object paths described by prefix patterns.
///
/// A prefix matches itself and every extension of it. The prefix set is kept
/// normalized: no member is an extension of another member. The universal
/// region (every path) is represented separately because no finite prefix set
/// over non-empty paths denotes it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Region {
    all: bool,
    prefixes: BTreeSet<ObjectPath>,
}

/// Exact set relation between two regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionRelation {
    Disjoint,
    Equal,
    ASubsetB,
    ASupersetB,
    Overlap,
}

impl RegionRelation {
    /// The relation seen from the other side.
    pub fn mirrored(self) -> Self {
        match self {
            RegionRelation::ASubsetB => RegionRelation::ASupersetB,
            RegionRelation::ASupersetB => RegionRelation::ASubsetB,
            other => other,
        }
    }
}

impl fmt::Display for RegionRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RegionRelation::Disjoint => "disjoint",
            RegionRelation::Equal => "equal",
            RegionRelation::ASubsetB => "subset",
            RegionRelation::ASupersetB => "superset",
            RegionRelation::Overlap => "overlap",
        };
        f.write_str(s)
    }
}

impl Region {
    pub fn empty() -> Self {
        Region::default()
    }

    pub fn all() -> Self {
        Region {
            all: true,
            prefixes: BTreeSet::new(),
        }
    }

    pub fn from_prefixes<I: IntoIterator<Item = ObjectPath>>(prefixes: I) -> Self {
        let mut sorted: Vec<ObjectPath> = prefixes.into_iter().collect();
        // Shorter prefixes first so an ancestor is always seen before its extensions.
        sorted.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let mut kept: BTreeSet<ObjectPath> = BTreeSet::new();
        for p in sorted {
            if !kept.iter().any(|k| k.is_prefix_of(&p)) {
                kept.insert(p);
            }
        }
        Region {
            all: false,
            prefixes: kept,
        }
    }

    /// Parses a textual region list. `"*"` denotes the universal region.
    pub fn parse<I, S>(items: I) -> Result<Self, PathError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut prefixes = Vec::new();
        for item in items {
            let item = item.as_ref();
            if item == ALL_TOKEN {
                return Ok(Region::all());
            }
            prefixes.push(item.parse()?);
        }
        Ok(Region::from_prefixes(prefixes))
    }

    pub fn is_all(&self) -> bool {
        self.all
    }

    pub fn is_empty(&self) -> bool {
        !self.all && self.prefixes.is_empty()
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &ObjectPath> {
        self.prefixes.iter()
    }

    pub fn contains(&self, path: &ObjectPath) -> bool {
        self.all || self.prefixes.iter().any(|p| p.is_prefix_of(path))
    }

    /// `self ⊆ other` over the (possibly infinite) denoted path sets.
    pub fn is_subset_of(&self, other: &Region) -> bool {
        if other.all {
            return true;
        }
        if self.all {
            return false;
        }
        // Every denoted set {p, p.*} lies inside `other` iff `p` itself does.
        self.prefixes.iter().all(|p| other.contains(p))
    }

    pub fn intersection(&self, other: &Region) -> Region {
        if self.all {
            return other.clone();
        }
        if other.all {
            return self.clone();
        }
        let mut out = Vec::new();
        for a in &self.prefixes {
            for b in &other.prefixes {
                if a.is_prefix_of(b) {
                    out.push(b.clone());
                } else if b.is_prefix_of(a) {
                    out.push(a.clone());
                }
            }
        }
        Region::from_prefixes(out)
    }

    pub fn union(&self, other: &Region) -> Region {
        if self.all || other.all {
            return Region::all();
        }
        Region::from_prefixes(self.prefixes.iter().chain(&other.prefixes).cloned())
    }

    pub fn intersects(&self, other: &Region) -> bool {
        !self.intersection(other).is_empty()
    }

    pub fn relation(&self, other: &Region) -> RegionRelation {
        if !self.intersects(other) {
            return RegionRelation::Disjoint;
        }
        match (self.is_subset_of(other), other.is_subset_of(self)) {
            (true, true) => RegionRelation::Equal,
            (true, false) => RegionRelation::ASubsetB,
            (false, true) => RegionRelation::ASupersetB,
            (false, false) => RegionRelation::Overlap,
        }
    }

    /// Textual form: a list of dot paths, or `["*"]` for the universal region.
    pub fn to_strings(&self) -> Vec<String> {
        if self.all {
            vec![ALL_TOKEN.to_string()]
        } else {
            self.prefixes.iter().map(ToString::to_string).collect()
        }
    }
}

pub fn region_relation(a: &Region, b: &Region) -> RegionRelation {
    a.relation(b)
}

pub fn region_intersection(a: &Region, b: &Region) -> Region {
    a.intersection(b)
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_strings().join(", "))
    }
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_strings().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let items = Vec::<String>::deserialize(deserializer)?;
        Region::parse(&items).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(items: &[&str]) -> Region {
        Region::parse(items).unwrap()
    }

    fn p(s: &str) -> ObjectPath {
        s.parse().unwrap()
    }

    #[test]
    fn normalizes_extensions_away() {
        let region = r(&["x.y", "x", "z.a", "z.a.b"]);
        assert_eq!(region.to_strings(), ["x", "z.a"]);
    }

    #[test]
    fn relation_examples() {
        assert_eq!(r(&["x"]).relation(&r(&["x"])), RegionRelation::Equal);
        assert_eq!(
            r(&["checklist"]).relation(&r(&["checklist", "landing_gear", "inventory"])),
            RegionRelation::ASubsetB
        );
        assert_eq!(
            r(&["inventory", "landing_gear"]).relation(&r(&["inventory", "paint_shop"])),
            RegionRelation::Overlap
        );
        assert_eq!(r(&["a"]).relation(&r(&["b"])), RegionRelation::Disjoint);
        assert_eq!(r(&["a.b"]).relation(&r(&["a"])), RegionRelation::ASupersetB.mirrored());
        assert_eq!(Region::all().relation(&r(&["a"])), RegionRelation::ASupersetB);
        assert_eq!(Region::empty().relation(&Region::empty()), RegionRelation::Disjoint);
    }

    #[test]
    fn overlap_witness_enumeration() {
        // Witness paths independently confirm the Overlap classification.
        let a = r(&["inventory", "landing_gear"]);
        let b = r(&["inventory", "paint_shop"]);
        let witnesses = ["inventory.x", "landing_gear.x", "paint_shop.x"].map(p);
        let both = witnesses.iter().filter(|w| a.contains(w) && b.contains(w)).count();
        let only_a = witnesses.iter().filter(|w| a.contains(w) && !b.contains(w)).count();
        let only_b = witnesses.iter().filter(|w| !a.contains(w) && b.contains(w)).count();
        assert!(both > 0 && only_a > 0 && only_b > 0);
        assert_eq!(a.relation(&b), RegionRelation::Overlap);
    }

    #[test]
    fn intersection_examples() {
        assert_eq!(r(&["x"]).intersection(&r(&["x.y"])), r(&["x.y"]));
        assert!(r(&["inventory", "landing_gear"])
            .intersection(&r(&["checklist"]))
            .is_empty());
        assert_eq!(
            r(&["landing_gear"]).intersection(&r(&["landing_gear", "inventory"])),
            r(&["landing_gear"])
        );
        assert_eq!(Region::all().intersection(&r(&["q"])), r(&["q"]));
    }

    #[test]
    fn textual_round_trip() {
        let region = r(&["inventory.paint", "checklist"]);
        let json = serde_json::to_string(&region).unwrap();
        assert_eq!(json, r#"["checklist","inventory.paint"]"#);
        assert_eq!(serde_json::from_str::<Region>(&json).unwrap(), region);
        let all: Region = serde_json::from_str(r#"["*"]"#).unwrap();
        assert!(all.is_all());
    }
}
