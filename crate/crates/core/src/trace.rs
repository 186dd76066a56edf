//! Audit trace: a header line followed by one JSON record per event.
//!
//! Records carry no timestamps or hash-ordered collections, so a scenario
//! always serializes to the same bytes.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ClashKind, Clock, RunStatus};
use crate::message::{Color, External, Message};
use crate::proto::arbitrary::ArbSnapshot;
use crate::proto::par::ParSnapshot;
use crate::proto::seq::SeqSnapshot;
use crate::scenario::Scenario;
use crate::topology::{Identity, ProcessIndex, TopologyFile};

pub const TRACE_FORMAT: &str = "d2sim-trace";
pub const TRACE_VERSION: u32 = 1;

/// Protocol-visible local state of one process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum Snapshot {
    Seq(SeqSnapshot),
    Par(ParSnapshot),
    Arb(ArbSnapshot),
}

impl Snapshot {
    pub fn state(&self) -> u8 {
        match self {
            Snapshot::Seq(s) => s.state,
            Snapshot::Par(s) => s.state,
            Snapshot::Arb(s) => s.state,
        }
    }

    pub fn color(&self) -> Option<Color> {
        match self {
            Snapshot::Seq(s) => s.color,
            Snapshot::Par(s) => s.color,
            Snapshot::Arb(s) => s.color,
        }
    }

    pub fn parent(&self) -> Option<Identity> {
        match self {
            Snapshot::Seq(s) => s.parent,
            Snapshot::Par(s) => s.parent,
            Snapshot::Arb(s) => s.parent,
        }
    }

    pub fn claimed(&self) -> bool {
        match self {
            Snapshot::Seq(s) => s.claimed,
            Snapshot::Par(s) => s.claimed,
            Snapshot::Arb(s) => s.claimed,
        }
    }

    /// Colors held in the distance-1 knowledge set, when the protocol has one.
    pub fn d1colors(&self) -> Option<&[Color]> {
        match self {
            Snapshot::Seq(s) => Some(&s.d1colors),
            Snapshot::Arb(s) => Some(&s.d1colors),
            Snapshot::Par(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    External {
        round: Clock,
        target: ProcessIndex,
        message: External,
    },
    Broadcast {
        round: Clock,
        origin: ProcessIndex,
        message: Message,
        receivers: Vec<ProcessIndex>,
    },
    Clash {
        round: Clock,
        victim: ProcessIndex,
        clash: ClashKind,
        participants: Vec<ProcessIndex>,
        benign: bool,
    },
    State {
        round: Clock,
        process: ProcessIndex,
        snapshot: Snapshot,
    },
    Claim {
        round: Clock,
        process: ProcessIndex,
    },
    /// A process was attached as a leaf; the topology grows by one.
    Join {
        round: Clock,
        parent: ProcessIndex,
        joiner: ProcessIndex,
        identity: Identity,
    },
    Finish {
        round: Clock,
        status: RunStatus,
    },
}

impl TraceEvent {
    pub fn round(&self) -> Clock {
        match self {
            TraceEvent::External { round, .. }
            | TraceEvent::Broadcast { round, .. }
            | TraceEvent::Clash { round, .. }
            | TraceEvent::State { round, .. }
            | TraceEvent::Claim { round, .. }
            | TraceEvent::Join { round, .. }
            | TraceEvent::Finish { round, .. } => *round,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub scenario: Scenario,
    pub topology: TopologyFile,
}

impl TraceHeader {
    pub fn new(scenario: Scenario, topology: TopologyFile) -> Self {
        TraceHeader {
            format: TRACE_FORMAT.to_string(),
            version: TRACE_VERSION,
            scenario,
            topology,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unsupported trace format `{format}` version {version}")]
    UnsupportedFormat { format: String, version: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for event in &self.events {
            serde_json::to_writer(&mut w, event)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Trace, TraceError> {
        let mut lines = reader.lines().enumerate();
        let (_, first) = lines.next().ok_or(TraceError::Empty)?;
        let header: TraceHeader = serde_json::from_str(&first?).map_err(|e| TraceError::Malformed {
            line: 1,
            reason: e.to_string(),
        })?;
        if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
            return Err(TraceError::UnsupportedFormat {
                format: header.format,
                version: header.version,
            });
        }
        let mut events = Vec::new();
        for (k, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(&line).map_err(|e| TraceError::Malformed {
                line: k + 1,
                reason: e.to_string(),
            })?;
            events.push(event);
        }
        Ok(Trace { header, events })
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        Trace::read_from(text.as_bytes())
    }

    pub fn broadcasts(&self) -> impl Iterator<Item = (Clock, ProcessIndex, &Message, &[ProcessIndex])> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Broadcast {
                round,
                origin,
                message,
                receivers,
            } => Some((*round, *origin, message, receivers.as_slice())),
            _ => None,
        })
    }

    pub fn snapshots(&self) -> impl Iterator<Item = (Clock, ProcessIndex, &Snapshot)> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::State {
                round,
                process,
                snapshot,
            } => Some((*round, *process, snapshot)),
            _ => None,
        })
    }

    pub fn claim(&self) -> Option<(Clock, ProcessIndex)> {
        self.events.iter().find_map(|e| match e {
            TraceEvent::Claim { round, process } => Some((*round, *process)),
            _ => None,
        })
    }

    pub fn finish(&self) -> Option<(Clock, RunStatus)> {
        self.events.iter().rev().find_map(|e| match e {
            TraceEvent::Finish { round, status } => Some((*round, *status)),
            _ => None,
        })
    }

    /// Last recorded snapshot of every process (`None` if it never changed).
    pub fn final_snapshots(&self) -> Vec<Option<Snapshot>> {
        let mut n = self.header.topology.n;
        n += self
            .events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Join { .. }))
            .count();
        let mut last = vec![None; n];
        for (_, p, s) in self.snapshots() {
            if p.slot() < n {
                last[p.slot()] = Some(s.clone());
            }
        }
        last
    }
}
