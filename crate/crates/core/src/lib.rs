//! Deterministic simulator and verifier for distance-2 coloring protocols on
//! synchronous broadcast/receive networks.
//!
//! ```
//! use d2sim::{builtin, run, verify_trace, ProtocolKind, Scenario};
//!
//! let tree = builtin("binary15").unwrap();
//! let outcome = run(&tree, &Scenario::new(ProtocolKind::SeqTree)).unwrap();
//! let report = verify_trace(&outcome.trace).unwrap();
//! assert!(report.consistency);
//! ```

pub mod engine;
pub mod error;
pub mod message;
pub mod proto;
pub mod scenario;
pub mod topology;
pub mod trace;
pub mod verifier;

pub use engine::{ClashPolicy, Clock, HandlerOrder, RunStatus, SimConfig, Simulation};
pub use error::SimError;
pub use message::{Color, External, Message, MessageKind, FICTITIOUS_COLOR};
pub use proto::par::ParFlags;
pub use proto::ChildOrder;
pub use scenario::{
    merge, run, run_with_order, ColoredTree, MergeError, ProtocolKind, RunOutcome, Scenario, ScenarioError,
};
pub use topology::{
    builtin, generate_random_connected_graph, generate_random_tree, Identity, IdentityMode, ProcessIndex, Topology,
    TopologyError, TopologyKind,
};
pub use trace::{Snapshot, Trace, TraceEvent};
pub use verifier::{verify_trace, VerificationReport};
