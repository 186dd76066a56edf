//! Scenario configuration and the end-to-end runner: build the nodes, inject
//! START, step to termination, apply joins, and package the trace.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ClashPolicy, Clock, HandlerOrder, Node, RunStatus, SimConfig, Simulation};
use crate::error::SimError;
use crate::message::{Color, External};
use crate::proto::arbitrary::ArbNode;
use crate::proto::par::{JoinRefusal, ParFlags, ParNode};
use crate::proto::seq::SeqNode;
use crate::proto::ChildOrder;
use crate::topology::{Identity, ProcessIndex, Topology, TopologyError, TopologyKind};
use crate::trace::{Trace, TraceEvent, TraceHeader};
use crate::verifier::check_coloring;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    SeqTree,
    ParTree,
    Arbitrary,
}

impl ProtocolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::SeqTree => "seq_tree",
            ProtocolKind::ParTree => "par_tree",
            ProtocolKind::Arbitrary => "arbitrary",
        }
    }

    pub fn needs_tree(self) -> bool {
        self != ProtocolKind::Arbitrary
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq_tree" => Ok(ProtocolKind::SeqTree),
            "par_tree" => Ok(ProtocolKind::ParTree),
            "arbitrary" => Ok(ProtocolKind::Arbitrary),
            other => Err(format!("unknown protocol `{other}` (seq_tree, par_tree, arbitrary)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub protocol: ProtocolKind,
    pub root: ProcessIndex,
    pub start_round: Clock,
    pub max_rounds: u64,
    pub clash_policy: ClashPolicy,
    pub par: ParFlags,
    pub child_order: ChildOrder,
    /// Pinned next-child choices, per identity.
    #[serde(default)]
    pub next_child_schedule: Vec<(Identity, Vec<Identity>)>,
    /// Arbitrary graphs: refuse on any known sender color.
    #[serde(default)]
    pub literal_refusal: bool,
    /// Parents that accept one new leaf each, in order, once coloring is done.
    #[serde(default)]
    pub joins: Vec<ProcessIndex>,
}

impl Scenario {
    pub fn new(protocol: ProtocolKind) -> Self {
        Scenario {
            protocol,
            root: ProcessIndex(1),
            start_round: 0,
            max_rounds: 1_000_000,
            clash_policy: ClashPolicy::FailFast,
            par: ParFlags {
                end_phase: true,
                sibling_end_parallel: false,
                root_always_ends: false,
            },
            child_order: ChildOrder::Smallest,
            next_child_schedule: Vec::new(),
            literal_refusal: false,
            joins: Vec::new(),
        }
    }

    /// The five-process example replay with the traversal choices pinned.
    pub fn table1() -> Self {
        Scenario {
            max_rounds: 100,
            next_child_schedule: vec![
                (Identity(1), vec![Identity(2)]),
                (Identity(2), vec![Identity(3), Identity(5)]),
            ],
            ..Scenario::new(ProtocolKind::Arbitrary)
        }
    }

    fn pinned(&self, id: Identity) -> Vec<Identity> {
        self.next_child_schedule
            .iter()
            .find(|(k, _)| *k == id)
            .map(|(_, v)| v.clone())
            .unwrap_or_default()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JoinError {
    #[error(transparent)]
    Refused(#[from] JoinRefusal),
    #[error("joins need a par_tree run with the END phase")]
    Unsupported,
    #[error("coloring did not finish before the join ({0:?})")]
    NotFinished(RunStatus),
    #[error("joiner was not colored ({0:?})")]
    Incomplete(RunStatus),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{protocol} needs a tree topology")]
    NeedsTree { protocol: ProtocolKind },
    #[error("root {0} is not in the topology")]
    UnknownRoot(ProcessIndex),
    #[error("{source}")]
    Sim { source: SimError, trace: Box<Trace> },
    #[error("join at {parent}: {reason}")]
    Join {
        parent: ProcessIndex,
        reason: JoinError,
        trace: Box<Trace>,
    },
}

impl ScenarioError {
    /// Trace recorded up to the failure, if the run got that far.
    pub fn trace(&self) -> Option<&Trace> {
        match self {
            ScenarioError::Sim { trace, .. } | ScenarioError::Join { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub trace: Trace,
    /// Topology after joins.
    pub topology: Topology,
    pub colors: Vec<Option<Color>>,
    /// Last executed round.
    pub rounds: Clock,
}

impl RunOutcome {
    pub fn broadcast_count(&self) -> usize {
        self.trace.broadcasts().count()
    }
}

pub fn run(topology: &Topology, scenario: &Scenario) -> Result<RunOutcome, ScenarioError> {
    run_with_order(topology, scenario, HandlerOrder::Ascending)
}

pub fn run_with_order(
    topology: &Topology,
    scenario: &Scenario,
    order: HandlerOrder,
) -> Result<RunOutcome, ScenarioError> {
    if scenario.protocol.needs_tree() && topology.kind() != TopologyKind::Tree {
        return Err(ScenarioError::NeedsTree {
            protocol: scenario.protocol,
        });
    }
    if !topology.contains(scenario.root) {
        return Err(ScenarioError::UnknownRoot(scenario.root));
    }
    let config = SimConfig {
        policy: scenario.clash_policy,
        benign_end_collisions: scenario.par.sibling_end_parallel,
        stop_on_claim: !(scenario.protocol == ProtocolKind::ParTree && scenario.par.end_phase),
        handler_order: order,
    };
    let header = TraceHeader::new(scenario.clone(), topology.to_file());
    let neighbors = |p: ProcessIndex| -> BTreeSet<Identity> { topology.neighbor_identities(p) };
    match scenario.protocol {
        ProtocolKind::SeqTree => {
            let nodes = topology
                .processes()
                .map(|p| {
                    let id = topology.identity(p);
                    SeqNode::new(id, neighbors(p), scenario.child_order, scenario.pinned(id))
                })
                .collect();
            let mut sim = Simulation::new(topology.clone(), nodes, config);
            let status = start(&mut sim, scenario).map_err(|e| sim_failure(&sim, &header, e))?;
            Ok(finish(sim, header, status))
        }
        ProtocolKind::Arbitrary => {
            let nodes = topology
                .processes()
                .map(|p| {
                    let id = topology.identity(p);
                    ArbNode::new(id, neighbors(p), scenario.child_order, scenario.pinned(id))
                        .with_literal_refusal(scenario.literal_refusal)
                })
                .collect();
            let mut sim = Simulation::new(topology.clone(), nodes, config);
            let status = start(&mut sim, scenario).map_err(|e| sim_failure(&sim, &header, e))?;
            Ok(finish(sim, header, status))
        }
        ProtocolKind::ParTree => {
            let nodes = topology
                .processes()
                .map(|p| ParNode::new(topology.identity(p), neighbors(p), scenario.par))
                .collect();
            let mut sim = Simulation::new(topology.clone(), nodes, config);
            let mut status = start(&mut sim, scenario).map_err(|e| sim_failure(&sim, &header, e))?;
            for &parent in &scenario.joins {
                status = join(&mut sim, scenario, parent, status).map_err(|e| match e {
                    Failure::Sim(e) => sim_failure(&sim, &header, e),
                    Failure::Join(reason) => ScenarioError::Join {
                        parent,
                        reason,
                        trace: Box::new(Trace {
                            header: header.clone(),
                            events: sim.events().to_vec(),
                        }),
                    },
                })?;
            }
            Ok(finish(sim, header, status))
        }
    }
}

fn start<N: Node>(sim: &mut Simulation<N>, scenario: &Scenario) -> Result<RunStatus, SimError> {
    if scenario.max_rounds == 0 {
        return Ok(RunStatus::BudgetExhausted);
    }
    sim.schedule_external(scenario.start_round, scenario.root, External::Start)?;
    sim.run(scenario.max_rounds)
}

fn remaining(sim_clock: Clock, scenario: &Scenario) -> u64 {
    scenario.max_rounds.saturating_sub((sim_clock + 1) as u64)
}

enum Failure {
    Sim(SimError),
    Join(JoinError),
}

fn join(
    sim: &mut Simulation<ParNode>,
    scenario: &Scenario,
    parent: ProcessIndex,
    status: RunStatus,
) -> Result<RunStatus, Failure> {
    if !scenario.par.end_phase {
        return Err(Failure::Join(JoinError::Unsupported));
    }
    if !sim.topology().contains(parent) {
        return Err(Failure::Sim(SimError::UnknownProcess(parent)));
    }
    if status != RunStatus::AllTerminal {
        return Err(Failure::Join(JoinError::NotFinished(status)));
    }
    let parent_id = sim.topology().identity(parent);
    let new_id = sim.node(parent).fresh_identity();
    sim.node_mut(parent)
        .accept_child(new_id)
        .map_err(|e| Failure::Join(e.into()))?;
    let (grown, joiner) = sim
        .topology()
        .with_leaf(parent, new_id)
        .map_err(|e| Failure::Join(e.into()))?;
    sim.add_process(grown, ParNode::joiner(new_id, parent_id, scenario.par));
    let round = sim.clock();
    sim.push_event(TraceEvent::Join {
        round,
        parent,
        joiner,
        identity: new_id,
    });
    let status = sim.run(remaining(sim.clock(), scenario)).map_err(Failure::Sim)?;
    if status != RunStatus::AllTerminal {
        return Err(Failure::Join(JoinError::Incomplete(status)));
    }
    Ok(status)
}

fn sim_failure<N: Node>(sim: &Simulation<N>, header: &TraceHeader, error: SimError) -> ScenarioError {
    ScenarioError::Sim {
        source: error,
        trace: Box::new(Trace {
            header: header.clone(),
            events: sim.events().to_vec(),
        }),
    }
}

fn finish<N: Node>(sim: Simulation<N>, header: TraceHeader, status: RunStatus) -> RunOutcome {
    let rounds = sim.clock();
    let topology = sim.topology().clone();
    let colors = sim.nodes().iter().map(|n| n.snapshot().color()).collect();
    let mut events = sim.into_events();
    events.push(TraceEvent::Finish { round: rounds, status });
    RunOutcome {
        status,
        trace: Trace { header, events },
        topology,
        colors,
        rounds,
    }
}

/// A tree together with a complete coloring of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColoredTree {
    pub topology: Topology,
    pub colors: Vec<Color>,
}

impl ColoredTree {
    /// Colored tree from a finished run.
    pub fn from_outcome(outcome: &RunOutcome) -> Option<ColoredTree> {
        let colors = outcome.colors.iter().copied().collect::<Option<Vec<_>>>()?;
        Some(ColoredTree {
            topology: outcome.topology.clone(),
            colors,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MergeError {
    #[error("maximum degrees differ: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("{process} already has degree Δ = {delta}")]
    SaturatedEndpoint { process: ProcessIndex, delta: usize },
    #[error("endpoint identities collide within distance 2 of the new edge ({0})")]
    IdentityPreconditionViolated(Identity),
    #[error("merged coloring is inconsistent: {a} and {b} at distance {distance} share color {color}")]
    ConsistencyBroken {
        a: ProcessIndex,
        b: ProcessIndex,
        distance: usize,
        color: Color,
    },
    #[error("both inputs must be trees")]
    NotATree,
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Joins two colored trees with the edge `(x, y)` and keeps every color.
/// `y` and the rest of `t2` are renumbered after `t1`'s processes.
pub fn merge(t1: &ColoredTree, x: ProcessIndex, t2: &ColoredTree, y: ProcessIndex) -> Result<ColoredTree, MergeError> {
    if t1.topology.kind() != TopologyKind::Tree || t2.topology.kind() != TopologyKind::Tree {
        return Err(MergeError::NotATree);
    }
    let (d1, d2) = (t1.topology.max_degree(), t2.topology.max_degree());
    if d1 != d2 {
        return Err(MergeError::DegreeMismatch(d1, d2));
    }
    for (t, p) in [(&t1.topology, x), (&t2.topology, y)] {
        if !t.contains(p) {
            return Err(MergeError::Topology(TopologyError::IndexOutOfRange {
                index: p.0,
                n: t.n(),
            }));
        }
        if t.degree(p) >= d1 {
            return Err(MergeError::SaturatedEndpoint { process: p, delta: d1 });
        }
    }
    let (id_x, id_y) = (t1.topology.identity(x), t2.topology.identity(y));
    if id_x == id_y || t2.topology.neighbor_identities(y).contains(&id_x) {
        return Err(MergeError::IdentityPreconditionViolated(id_x));
    }
    if t1.topology.neighbor_identities(x).contains(&id_y) {
        return Err(MergeError::IdentityPreconditionViolated(id_y));
    }

    let shift = t1.topology.n();
    let mut edges = t1.topology.edges();
    edges.extend(t2.topology.edges().into_iter().map(|(a, b)| (a + shift, b + shift)));
    edges.push((x.0, y.0 + shift));
    let mut identities = t1.topology.identities().to_vec();
    identities.extend_from_slice(t2.topology.identities());
    let topology = Topology::build(shift + t2.topology.n(), &edges, Some(identities), TopologyKind::Tree)?;
    let mut colors = t1.colors.clone();
    colors.extend_from_slice(&t2.colors);

    let as_options: Vec<Option<Color>> = colors.iter().copied().map(Some).collect();
    let check = check_coloring(&topology, &as_options, None);
    if let Some(v) = check.conflicts.first() {
        return Err(MergeError::ConsistencyBroken {
            a: v.a,
            b: v.b,
            distance: v.distance,
            color: v.color,
        });
    }
    Ok(ColoredTree { topology, colors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::builtin;

    fn path3_colored() -> ColoredTree {
        ColoredTree {
            topology: builtin("path3").unwrap(),
            colors: vec![1, 0, 2],
        }
    }

    #[test]
    fn protocol_names_round_trip() {
        for p in [ProtocolKind::SeqTree, ProtocolKind::ParTree, ProtocolKind::Arbitrary] {
            assert_eq!(p.as_str().parse::<ProtocolKind>().unwrap(), p);
        }
        assert!("tree".parse::<ProtocolKind>().is_err());
    }

    #[test]
    fn tree_protocol_rejects_general_graph() {
        let t = builtin("table1").unwrap();
        assert!(matches!(
            run(&t, &Scenario::new(ProtocolKind::SeqTree)),
            Err(ScenarioError::NeedsTree { .. })
        ));
    }

    #[test]
    fn zero_budget() {
        let t = builtin("path3").unwrap();
        let s = Scenario {
            max_rounds: 0,
            ..Scenario::new(ProtocolKind::SeqTree)
        };
        assert_eq!(run(&t, &s).unwrap().status, RunStatus::BudgetExhausted);
    }

    #[test]
    fn merge_compatible_paths() {
        let t = path3_colored();
        let merged = merge(&t, ProcessIndex(3), &t, ProcessIndex(1)).unwrap();
        assert_eq!(merged.colors, vec![1, 0, 2, 1, 0, 2]);
        assert_eq!(merged.topology.n(), 6);
        assert_eq!(merged.topology.graph_distance(ProcessIndex(3), ProcessIndex(4)), 1);
    }

    #[test]
    fn merge_same_endpoint_colors_is_rejected() {
        let t = path3_colored();
        let err = merge(&t, ProcessIndex(3), &t, ProcessIndex(3)).unwrap_err();
        // identical identities are caught first
        assert_eq!(err, MergeError::IdentityPreconditionViolated(Identity(3)));

        let other = ColoredTree {
            topology: Topology::build(
                3,
                &[(1, 2), (2, 3)],
                Some(vec![Identity(7), Identity(8), Identity(9)]),
                TopologyKind::Tree,
            )
            .unwrap(),
            colors: vec![2, 0, 1],
        };
        assert!(matches!(
            merge(&t, ProcessIndex(3), &other, ProcessIndex(1)),
            Err(MergeError::ConsistencyBroken {
                distance: 1,
                color: 2,
                ..
            })
        ));
    }

    #[test]
    fn merge_preconditions() {
        let t = path3_colored();
        let star = ColoredTree {
            topology: builtin("star4").unwrap(),
            colors: vec![0, 1, 2, 3, 4],
        };
        assert_eq!(
            merge(&t, ProcessIndex(1), &star, ProcessIndex(2)),
            Err(MergeError::DegreeMismatch(2, 4))
        );
        assert_eq!(
            merge(&t, ProcessIndex(2), &t, ProcessIndex(1)),
            Err(MergeError::SaturatedEndpoint {
                process: ProcessIndex(2),
                delta: 2
            })
        );
    }
}
