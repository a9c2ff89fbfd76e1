//! Interest-scoped peer-to-peer replication with transactions over CRDTs,
//! plus a simulator and checkers for the consistency guarantees it gives.

pub mod crdt;
pub mod model;
pub mod node;
pub mod report;
pub mod sim;
pub mod sync;
pub mod trace;
pub mod verify;

pub use crdt::{ObjectStore, Scalar, Schema, Timestamp, TypeTag, Value};
pub use model::{
    InterestSet, NodeId, ObjectPath, OpId, Operation, Region, RegionRelation, Transaction, TransactionId,
    VersionVector,
};
pub use node::{Change, NodeError, NodeState};
pub use sim::{load_scenario, run_scenario, Scenario};
pub use sync::{run_session, MetadataMode, SessionConfig, SyncBatch};
pub use trace::Trace;
