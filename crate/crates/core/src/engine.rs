//! Synchronous broadcast/receive engine.
//!
//! One call to [`Simulation::step_round`] is one time slot:
//!
//! 1. `CLOCK += 1` (the clock starts at `-1`, so the first slot is `0`);
//! 2. clock-guarded handlers run and each may place at most one broadcast;
//! 3. collisions and conflicts are detected over the slot's broadcast set;
//! 4. surviving copies are delivered to neighbors in the same slot;
//! 5. external messages and receptions are handled;
//! 6. changed per-process snapshots are appended to the trace.
//!
//! Broadcasts only take effect at the end of step 2, so the handler order
//! inside a slot is not observable by the protocols.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::message::{External, Message, MessageKind};
use crate::topology::{ProcessIndex, Topology};
use crate::trace::{Snapshot, TraceEvent};

pub type Clock = i64;

/// Error returned by a protocol handler; the engine attaches round and
/// process before surfacing it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl Violation {
    pub fn new(reason: impl Into<String>) -> Self {
        Violation(reason.into())
    }
}

/// Per-slot broadcast buffer handed to clock handlers.
#[derive(Debug, Default)]
pub struct Outbox {
    pub(crate) message: Option<Message>,
    overflow: bool,
}

impl Outbox {
    pub fn broadcast(&mut self, message: Message) {
        if self.message.is_some() {
            self.overflow = true;
        } else {
            self.message = Some(message);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.message.is_none()
    }
}

/// Local state machine of one process. Handlers only see identities, never
/// process indices.
pub trait Node {
    fn on_external(&mut self, message: &External, clock: Clock) -> Result<(), Violation>;
    fn on_clock(&mut self, clock: Clock, out: &mut Outbox) -> Result<(), Violation>;
    fn on_message(&mut self, message: &Message, clock: Clock) -> Result<(), Violation>;
    fn snapshot(&self) -> Snapshot;
    /// This process announced global termination.
    fn has_claimed(&self) -> bool;
    /// Reached its terminal state.
    fn is_done(&self) -> bool;
    /// No clock-driven action can fire until a message arrives.
    fn is_idle(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClashPolicy {
    #[default]
    FailFast,
    RecordAndCorrupt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClashKind {
    /// Two or more neighbors of the victim broadcast in the same slot.
    Collision,
    /// The victim and at least one neighbor broadcast in the same slot.
    Conflict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClashEvent {
    pub round: Clock,
    pub victim: ProcessIndex,
    pub kind: ClashKind,
    pub participants: Vec<ProcessIndex>,
    /// Whitelisted collision of END messages (sibling END relaxation).
    pub benign: bool,
}

/// Clash detector shared by the engine and the TDMA replay.
pub fn detect_clashes(topology: &Topology, round: Clock, broadcasters: &BTreeSet<ProcessIndex>) -> Vec<ClashEvent> {
    let mut events = Vec::new();
    for victim in topology.processes() {
        let talking: Vec<ProcessIndex> = topology
            .neighbors(victim)
            .iter()
            .copied()
            .filter(|q| broadcasters.contains(q))
            .collect();
        if talking.len() >= 2 {
            events.push(ClashEvent {
                round,
                victim,
                kind: ClashKind::Collision,
                participants: talking.clone(),
                benign: false,
            });
        }
        if broadcasters.contains(&victim) && !talking.is_empty() {
            let mut participants = talking;
            participants.push(victim);
            participants.sort();
            events.push(ClashEvent {
                round,
                victim,
                kind: ClashKind::Conflict,
                participants,
                benign: false,
            });
        }
    }
    events
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HandlerOrder {
    #[default]
    Ascending,
    /// Seeded permutation per slot; used to check order independence.
    Shuffled(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// The root claimed termination.
    RootClaimed,
    /// Every process reached its terminal state.
    AllTerminal,
    /// Quiescent: nothing can fire any more, yet not every process finished.
    Partial,
    BudgetExhausted,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::RootClaimed => "root_claimed",
            RunStatus::AllTerminal => "all_terminal",
            RunStatus::Partial => "partial",
            RunStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimConfig {
    pub policy: ClashPolicy,
    /// Do not treat END-only collisions as model violations.
    pub benign_end_collisions: bool,
    /// Stop as soon as a process claims termination.
    pub stop_on_claim: bool,
    pub handler_order: HandlerOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClaimRecord {
    pub round: Clock,
    pub process: ProcessIndex,
}

pub struct Simulation<N: Node> {
    topology: Topology,
    nodes: Vec<N>,
    config: SimConfig,
    clock: Clock,
    externals: BTreeMap<Clock, Vec<(ProcessIndex, External)>>,
    start_scheduled: bool,
    events: Vec<TraceEvent>,
    last: Vec<Snapshot>,
    claim: Option<ClaimRecord>,
    aborted: bool,
}

impl<N: Node> Simulation<N> {
    pub fn new(topology: Topology, nodes: Vec<N>, config: SimConfig) -> Self {
        assert_eq!(topology.n(), nodes.len(), "one node per process");
        let last = nodes.iter().map(Node::snapshot).collect();
        Simulation {
            topology,
            nodes,
            config,
            clock: -1,
            externals: BTreeMap::new(),
            start_scheduled: false,
            events: Vec::new(),
            last,
            claim: None,
            aborted: false,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    pub fn node(&self, p: ProcessIndex) -> &N {
        &self.nodes[p.slot()]
    }

    pub fn node_mut(&mut self, p: ProcessIndex) -> &mut N {
        &mut self.nodes[p.slot()]
    }

    pub fn nodes(&self) -> &[N] {
        &self.nodes
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }

    pub fn claim(&self) -> Option<ClaimRecord> {
        self.claim
    }

    pub fn config_mut(&mut self) -> &mut SimConfig {
        &mut self.config
    }

    pub fn push_event(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    /// Queues an out-of-band message for `target`, handled in the reception
    /// phase of `round`.
    pub fn schedule_external(&mut self, round: Clock, target: ProcessIndex, message: External) -> Result<(), SimError> {
        if !self.topology.contains(target) {
            return Err(SimError::UnknownProcess(target));
        }
        if round < 0 || round <= self.clock {
            return Err(SimError::RoundInPast {
                round,
                clock: self.clock,
            });
        }
        if message == External::Start {
            if self.start_scheduled {
                return Err(SimError::DuplicateStart { round });
            }
            self.start_scheduled = true;
        }
        self.externals.entry(round).or_default().push((target, message));
        Ok(())
    }

    /// Grows the network by one process. `topology` must be the current one
    /// plus the new process as its last index.
    pub fn add_process(&mut self, topology: Topology, node: N) {
        assert_eq!(topology.n(), self.nodes.len() + 1, "exactly one new process");
        self.last.push(node.snapshot());
        self.nodes.push(node);
        self.topology = topology;
    }

    fn order(&self, round: Clock) -> Vec<ProcessIndex> {
        let mut order: Vec<ProcessIndex> = self.topology.processes().collect();
        if let HandlerOrder::Shuffled(seed) = self.config.handler_order {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (round as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            order.shuffle(&mut rng);
        }
        order
    }

    /// Executes one time slot and returns the trace records it produced.
    pub fn step_round(&mut self) -> Result<&[TraceEvent], SimError> {
        if self.aborted {
            return Err(SimError::Aborted);
        }
        let first = self.events.len();
        self.clock += 1;
        let round = self.clock;
        let order = self.order(round);

        let mut outgoing: Vec<(ProcessIndex, Message)> = Vec::new();
        for &p in &order {
            let mut out = Outbox::default();
            if let Err(v) = self.nodes[p.slot()].on_clock(round, &mut out) {
                return Err(self.abort(SimError::ProtocolViolation {
                    round,
                    process: p,
                    reason: v.0,
                }));
            }
            if out.overflow {
                return Err(self.abort(SimError::DoubleBroadcast { round, process: p }));
            }
            if let Some(message) = out.message {
                outgoing.push((p, message));
            }
        }
        outgoing.sort_by_key(|(p, _)| *p);

        let kinds: BTreeMap<ProcessIndex, MessageKind> = outgoing.iter().map(|(p, m)| (*p, m.kind())).collect();
        let broadcasters: BTreeSet<ProcessIndex> = kinds.keys().copied().collect();
        let mut clashes = detect_clashes(&self.topology, round, &broadcasters);
        if self.config.benign_end_collisions {
            for c in &mut clashes {
                c.benign =
                    c.kind == ClashKind::Collision && c.participants.iter().all(|p| kinds[p] == MessageKind::End);
            }
        }
        // a receiver loses every copy involved in a clash at that receiver
        let mut lost: BTreeSet<(ProcessIndex, ProcessIndex)> = BTreeSet::new();
        for c in &clashes {
            for &origin in &c.participants {
                if origin != c.victim {
                    lost.insert((c.victim, origin));
                }
            }
        }

        let mut inbox: BTreeMap<ProcessIndex, Vec<usize>> = BTreeMap::new();
        for (k, (origin, message)) in outgoing.iter().enumerate() {
            let receivers: Vec<ProcessIndex> = self
                .topology
                .neighbors(*origin)
                .iter()
                .copied()
                .filter(|r| !lost.contains(&(*r, *origin)))
                .collect();
            for r in &receivers {
                inbox.entry(*r).or_default().push(k);
            }
            self.events.push(TraceEvent::Broadcast {
                round,
                origin: *origin,
                message: message.clone(),
                receivers,
            });
        }
        let fatal: Vec<ClashEvent> = clashes.iter().filter(|c| !c.benign).cloned().collect();
        for c in clashes {
            self.events.push(TraceEvent::Clash {
                round,
                victim: c.victim,
                clash: c.kind,
                participants: c.participants,
                benign: c.benign,
            });
        }
        if !fatal.is_empty() && self.config.policy == ClashPolicy::FailFast {
            return Err(self.abort(SimError::ClashDetected { round, events: fatal }));
        }

        let externals = self.externals.remove(&round).unwrap_or_default();
        for &p in &order {
            for (target, message) in externals.iter().filter(|(t, _)| *t == p) {
                self.events.push(TraceEvent::External {
                    round,
                    target: *target,
                    message: message.clone(),
                });
                if let Err(v) = self.nodes[p.slot()].on_external(message, round) {
                    return Err(self.abort(SimError::ProtocolViolation {
                        round,
                        process: p,
                        reason: v.0,
                    }));
                }
            }
            for &k in inbox.get(&p).map(Vec::as_slice).unwrap_or(&[]) {
                if let Err(v) = self.nodes[p.slot()].on_message(&outgoing[k].1, round) {
                    return Err(self.abort(SimError::ProtocolViolation {
                        round,
                        process: p,
                        reason: v.0,
                    }));
                }
            }
        }

        for p in self.topology.processes() {
            let snapshot = self.nodes[p.slot()].snapshot();
            if snapshot != self.last[p.slot()] {
                self.events.push(TraceEvent::State {
                    round,
                    process: p,
                    snapshot: snapshot.clone(),
                });
                self.last[p.slot()] = snapshot;
            }
        }
        if self.claim.is_none() {
            if let Some(p) = self.topology.processes().find(|p| self.nodes[p.slot()].has_claimed()) {
                self.claim = Some(ClaimRecord { round, process: p });
                self.events.push(TraceEvent::Claim { round, process: p });
            }
        }
        Ok(&self.events[first..])
    }

    fn abort(&mut self, err: SimError) -> SimError {
        self.aborted = true;
        err
    }

    fn pending_externals(&self) -> bool {
        self.externals.keys().any(|&r| r > self.clock)
    }

    /// Current termination status, if the run is over.
    pub fn status(&self) -> Option<RunStatus> {
        if self.config.stop_on_claim && self.claim.is_some() {
            return Some(RunStatus::RootClaimed);
        }
        if self.nodes.iter().all(Node::is_done) {
            return Some(RunStatus::AllTerminal);
        }
        if !self.pending_externals() && self.nodes.iter().all(Node::is_idle) {
            return Some(RunStatus::Partial);
        }
        None
    }

    /// Steps until the run is over or `max_rounds` further slots elapsed.
    pub fn run(&mut self, max_rounds: u64) -> Result<RunStatus, SimError> {
        for _ in 0..max_rounds {
            if let Some(status) = self.status() {
                return Ok(status);
            }
            self.step_round()?;
        }
        Ok(self.status().unwrap_or(RunStatus::BudgetExhausted))
    }
}
