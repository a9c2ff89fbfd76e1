//! The two replicated datatypes (PN-counter, LWW-register) and the per-node
//! object store.
//!
//! Counters commute natively. Registers are resolved by [`Timestamp`], whose
//! total order (lamport, then origin) is the arbitration order of an
//! execution. Duplicate suppression happens in the node's op log, so
//! [`ObjectStore::apply`] assumes each operation is applied at most once.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{NodeId, ObjectPath, Operation, Region};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrdtError {
    #[error("type mismatch at {path}: declared {declared}, got {found}")]
    TypeMismatch {
        path: String,
        declared: TypeTag,
        found: TypeTag,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub lamport: u64,
    pub origin: NodeId,
}

impl Timestamp {
    pub fn new(lamport: u64, origin: impl Into<NodeId>) -> Self {
        Timestamp {
            lamport,
            origin: origin.into(),
        }
    }

    /// Sorts below every timestamp a node can issue.
    pub fn zero() -> Self {
        Timestamp::new(0, "")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Str(s.to_string())
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Str(s) => write!(f, "'{s}'"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeTag {
    Counter,
    Register,
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TypeTag::Counter => "counter",
            TypeTag::Register => "register",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrdtMutation {
    CounterAdd { delta: i64 },
    RegisterWrite { value: Scalar, ts: Timestamp },
}

impl CrdtMutation {
    pub fn type_tag(&self) -> TypeTag {
        match self {
            CrdtMutation::CounterAdd { .. } => TypeTag::Counter,
            CrdtMutation::RegisterWrite { .. } => TypeTag::Register,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PnCounter {
    /// Declared initial value; identical on every replica of one execution.
    pub base: i64,
    pub inc: BTreeMap<NodeId, u64>,
    pub dec: BTreeMap<NodeId, u64>,
}

impl PnCounter {
    pub fn with_base(base: i64) -> Self {
        PnCounter {
            base,
            ..Default::default()
        }
    }

    pub fn value(&self) -> i64 {
        let inc: u64 = self.inc.values().sum();
        let dec: u64 = self.dec.values().sum();
        self.base + inc as i64 - dec as i64
    }

    pub fn add(&mut self, origin: &NodeId, delta: i64) {
        let side = if delta >= 0 { &mut self.inc } else { &mut self.dec };
        *side.entry(origin.clone()).or_insert(0) += delta.unsigned_abs();
    }

    fn join(&self, other: &PnCounter) -> PnCounter {
        fn max_maps(a: &BTreeMap<NodeId, u64>, b: &BTreeMap<NodeId, u64>) -> BTreeMap<NodeId, u64> {
            let mut out = a.clone();
            for (k, v) in b {
                let e = out.entry(k.clone()).or_insert(0);
                *e = (*e).max(*v);
            }
            out
        }
        PnCounter {
            base: self.base.max(other.base),
            inc: max_maps(&self.inc, &other.inc),
            dec: max_maps(&self.dec, &other.dec),
        }
    }

    fn below(&self, other: &PnCounter) -> bool {
        let le = |a: &BTreeMap<NodeId, u64>, b: &BTreeMap<NodeId, u64>| {
            a.iter().all(|(k, v)| *v <= b.get(k).copied().unwrap_or(0))
        };
        self.base <= other.base && le(&self.inc, &other.inc) && le(&self.dec, &other.dec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LwwRegister {
    pub value: Scalar,
    pub ts: Timestamp,
}

impl LwwRegister {
    /// Adopts the write iff its timestamp is strictly newer.
    pub fn write(&mut self, value: Scalar, ts: Timestamp) {
        if ts > self.ts {
            self.value = value;
            self.ts = ts;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CrdtState {
    PnCounter(PnCounter),
    LwwRegister(LwwRegister),
}

impl CrdtState {
    pub fn type_tag(&self) -> TypeTag {
        match self {
            CrdtState::PnCounter(_) => TypeTag::Counter,
            CrdtState::LwwRegister(_) => TypeTag::Register,
        }
    }

    pub fn value(&self) -> Value {
        match self {
            CrdtState::PnCounter(c) => Value::Counter(c.value()),
            CrdtState::LwwRegister(r) => Value::Register(r.value.clone()),
        }
    }

    /// State order: entrywise `<=` for counters, `(timestamp, value)` order for registers.
    pub fn is_below(&self, other: &CrdtState) -> Result<bool, CrdtError> {
        match (self, other) {
            (CrdtState::PnCounter(a), CrdtState::PnCounter(b)) => Ok(a.below(b)),
            (CrdtState::LwwRegister(a), CrdtState::LwwRegister(b)) => {
                Ok((&a.ts, &a.value) <= (&b.ts, &b.value))
            }
            _ => Err(mismatch("<state>", self.type_tag(), other.type_tag())),
        }
    }
}

fn mismatch(path: &str, declared: TypeTag, found: TypeTag) -> CrdtError {
    CrdtError::TypeMismatch {
        path: path.to_string(),
        declared,
        found,
    }
}

/// Least upper bound of two states of the same type.
pub fn merge_state(a: &CrdtState, b: &CrdtState) -> Result<CrdtState, CrdtError> {
    match (a, b) {
        (CrdtState::PnCounter(x), CrdtState::PnCounter(y)) => Ok(CrdtState::PnCounter(x.join(y))),
        (CrdtState::LwwRegister(x), CrdtState::LwwRegister(y)) => {
            // Equal timestamps with different values cannot arise from the
            // protocol; breaking the tie by value keeps the join commutative.
            let winner = match x.ts.cmp(&y.ts) {
                std::cmp::Ordering::Greater => x,
                std::cmp::Ordering::Less => y,
                std::cmp::Ordering::Equal => {
                    if x.value >= y.value {
                        x
                    } else {
                        y
                    }
                }
            };
            Ok(CrdtState::LwwRegister(winner.clone()))
        }
        _ => Err(mismatch("<state>", a.type_tag(), b.type_tag())),
    }
}

/// Materialized value of one path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Counter(i64),
    Register(Scalar),
    Absent,
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Counter(c) => write!(f, "{c}"),
            Value::Register(s) => write!(f, "{s}"),
            Value::Absent => f.write_str("<absent>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemaEntry {
    #[serde(rename = "type")]
    pub tag: TypeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Scalar>,
}

/// Declared CRDT types by path prefix; the longest matching prefix wins.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    entries: BTreeMap<ObjectPath, SchemaEntry>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, prefix: ObjectPath, tag: TypeTag, initial: Option<Scalar>) {
        self.entries.insert(prefix, SchemaEntry { tag, initial });
    }

    pub fn lookup(&self, path: &ObjectPath) -> Option<&SchemaEntry> {
        self.entries
            .iter()
            .filter(|(p, _)| p.is_prefix_of(path))
            .max_by_key(|(p, _)| p.len())
            .map(|(_, e)| e)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ObjectPath, &SchemaEntry)> {
        self.entries.iter()
    }
}

/// Objects held by one node. Objects are materialized on first mutation,
/// starting from their declared initial value.
#[derive(Debug, Clone, Default)]
pub struct ObjectStore {
    schema: Arc<Schema>,
    objects: BTreeMap<ObjectPath, CrdtState>,
}

impl PartialEq for ObjectStore {
    fn eq(&self, other: &Self) -> bool {
        self.objects == other.objects
    }
}

impl Eq for ObjectStore {}

impl ObjectStore {
    pub fn new(schema: Arc<Schema>) -> Self {
        ObjectStore {
            schema,
            objects: BTreeMap::new(),
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn objects(&self) -> &BTreeMap<ObjectPath, CrdtState> {
        &self.objects
    }

    pub fn get(&self, path: &ObjectPath) -> Option<&CrdtState> {
        self.objects.get(path)
    }

    pub fn insert_state(&mut self, path: ObjectPath, state: CrdtState) {
        self.objects.insert(path, state);
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    fn fresh_state(&self, path: &ObjectPath, mutation: &CrdtMutation) -> Result<CrdtState, CrdtError> {
        let tag = mutation.type_tag();
        let entry = self.schema.lookup(path);
        if let Some(e) = entry {
            if e.tag != tag {
                return Err(mismatch(&path.to_string(), e.tag, tag));
            }
        }
        let initial = entry.and_then(|e| e.initial.clone());
        Ok(match mutation {
            CrdtMutation::CounterAdd { .. } => {
                let base = match initial {
                    Some(Scalar::Int(i)) => i,
                    _ => 0,
                };
                CrdtState::PnCounter(PnCounter::with_base(base))
            }
            CrdtMutation::RegisterWrite { value, .. } => CrdtState::LwwRegister(LwwRegister {
                value: initial.unwrap_or_else(|| value.clone()),
                ts: Timestamp::zero(),
            }),
        })
    }

    /// Applies one operation in place.
    pub fn apply(&mut self, op: &Operation) -> Result<(), CrdtError> {
        if let Some(existing) = self.objects.get(&op.target) {
            let (declared, found) = (existing.type_tag(), op.mutation.type_tag());
            if declared != found {
                return Err(mismatch(&op.target.to_string(), declared, found));
            }
        } else {
            let state = self.fresh_state(&op.target, &op.mutation)?;
            self.objects.insert(op.target.clone(), state);
        }
        let state = self.objects.get_mut(&op.target).expect("inserted above");
        match (state, &op.mutation) {
            (CrdtState::PnCounter(c), CrdtMutation::CounterAdd { delta }) => c.add(&op.id.origin, *delta),
            (CrdtState::LwwRegister(r), CrdtMutation::RegisterWrite { value, ts }) => {
                r.write(value.clone(), ts.clone())
            }
            _ => unreachable!("type tags checked above"),
        }
        Ok(())
    }

    pub fn read(&self, path: &ObjectPath) -> Value {
        self.objects.get(path).map_or(Value::Absent, CrdtState::value)
    }

    /// Materialized values of every object inside `scope`, in path order.
    pub fn values_in(&self, scope: &Region) -> BTreeMap<ObjectPath, Value> {
        self.objects
            .iter()
            .filter(|(p, _)| scope.contains(p))
            .map(|(p, s)| (p.clone(), s.value()))
            .collect()
    }

    /// Hex SHA-256 over the canonical rendering of the scoped values.
    pub fn digest(&self, scope: &Region) -> String {
        let mut hasher = Sha256::new();
        for (path, value) in self.values_in(scope) {
            let rendered = serde_json::to_string(&value).expect("values serialize");
            hasher.update(path.to_string().as_bytes());
            hasher.update(b"=");
            hasher.update(rendered.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Pure form of [`ObjectStore::apply`].
pub fn apply_mutation(store: &ObjectStore, op: &Operation) -> Result<ObjectStore, CrdtError> {
    let mut out = store.clone();
    out.apply(op)?;
    Ok(out)
}

pub fn read_value(store: &ObjectStore, path: &ObjectPath) -> Value {
    store.read(path)
}

/// Per-path join over `scope`; paths outside `scope` come from `a` unchanged.
pub fn merge_store(a: &ObjectStore, b: &ObjectStore, scope: &Region) -> Result<ObjectStore, CrdtError> {
    let mut out = a.clone();
    for (path, theirs) in &b.objects {
        if !scope.contains(path) {
            continue;
        }
        let merged = match a.objects.get(path) {
            Some(ours) => merge_state(ours, theirs).map_err(|_| {
                mismatch(&path.to_string(), ours.type_tag(), theirs.type_tag())
            })?,
            None => theirs.clone(),
        };
        out.objects.insert(path.clone(), merged);
    }
    Ok(out)
}
