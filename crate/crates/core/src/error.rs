use thiserror::Error;

use crate::engine::{ClashEvent, Clock};
use crate::topology::ProcessIndex;

/// Failures raised while stepping a simulation.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("{} clash event(s) in round {round}, first at {}", events.len(), events[0].victim)]
    ClashDetected { round: Clock, events: Vec<ClashEvent> },
    #[error("protocol violation at {process} in round {round}: {reason}")]
    ProtocolViolation {
        round: Clock,
        process: ProcessIndex,
        reason: String,
    },
    #[error("{process} broadcast twice in round {round}")]
    DoubleBroadcast { round: Clock, process: ProcessIndex },
    #[error("a START is already scheduled (second one at round {round})")]
    DuplicateStart { round: Clock },
    #[error("cannot schedule at round {round}, clock is already {clock}")]
    RoundInPast { round: Clock, clock: Clock },
    #[error("no process {0} in this topology")]
    UnknownProcess(ProcessIndex),
    #[error("simulation was aborted by an earlier error")]
    Aborted,
}
