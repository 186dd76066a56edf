//! Independent checks over final colorings and recorded traces.
//!
//! Nothing here reads protocol-internal knowledge sets to decide whether a
//! coloring is correct: consistency is a brute-force BFS over the topology,
//! and the TDMA replay reuses only the engine's clash detector.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{detect_clashes, ClashKind, Clock, RunStatus};
use crate::message::{Color, Message, MessageKind};
use crate::proto::par::GLOBALLY_DONE;
use crate::scenario::ProtocolKind;
use crate::topology::{ProcessIndex, Topology, TopologyError};
use crate::trace::{Snapshot, Trace, TraceEvent};

pub const REPORT_FORMAT: &str = "d2sim-report";
pub const REPORT_VERSION: u32 = 1;

/// Frozen constant of the parallel round bound `C·d·Δ`.
pub const ROUND_BOUND_FACTOR: u64 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyViolation {
    pub a: ProcessIndex,
    pub b: ProcessIndex,
    pub distance: usize,
    pub color: Color,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoringCheck {
    pub uncolored: Vec<ProcessIndex>,
    /// Colors outside `0..=Δ`; empty when validity was not requested.
    pub out_of_range: Vec<ProcessIndex>,
    pub conflicts: Vec<ConsistencyViolation>,
    pub palette_size: usize,
}

impl ColoringCheck {
    pub fn validity_ok(&self) -> bool {
        self.uncolored.is_empty() && self.out_of_range.is_empty()
    }

    pub fn consistency_ok(&self) -> bool {
        self.uncolored.is_empty() && self.conflicts.is_empty()
    }
}

/// Checks a (possibly partial) coloring. `validity_delta` enables the
/// `0..=Δ` range check.
pub fn check_coloring(topology: &Topology, colors: &[Option<Color>], validity_delta: Option<usize>) -> ColoringCheck {
    let mut uncolored = Vec::new();
    let mut out_of_range = Vec::new();
    let mut conflicts = Vec::new();
    for p in topology.processes() {
        let Some(c) = colors.get(p.slot()).copied().flatten() else {
            uncolored.push(p);
            continue;
        };
        if let Some(delta) = validity_delta {
            if c < 0 || c > delta as Color {
                out_of_range.push(p);
            }
        }
        for (q, d) in depth2_ball(topology, p) {
            if q > p && colors.get(q.slot()).copied().flatten() == Some(c) {
                conflicts.push(ConsistencyViolation {
                    a: p,
                    b: q,
                    distance: d,
                    color: c,
                });
            }
        }
    }
    let palette_size = colors.iter().flatten().collect::<BTreeSet<_>>().len();
    ColoringCheck {
        uncolored,
        out_of_range,
        conflicts,
        palette_size,
    }
}

/// Processes at distance 1 or 2 from `p`, with their distance.
fn depth2_ball(topology: &Topology, p: ProcessIndex) -> Vec<(ProcessIndex, usize)> {
    let mut seen = BTreeMap::new();
    for &q in topology.neighbors(p) {
        seen.insert(q, 1);
    }
    for &q in topology.neighbors(p) {
        for &r in topology.neighbors(q) {
            if r != p {
                seen.entry(r).or_insert(2);
            }
        }
    }
    seen.into_iter().collect()
}

/// Centralized baseline: BFS order from process 1, each process takes the
/// smallest color unused within distance 2.
pub fn greedy_reference_coloring(topology: &Topology) -> Vec<Color> {
    let order = bfs_order(topology, ProcessIndex(1));
    let mut colors: Vec<Option<Color>> = vec![None; topology.n()];
    for p in order {
        let taken: BTreeSet<Color> = topology
            .within_two_hops(p)
            .into_iter()
            .filter_map(|q| colors[q.slot()])
            .collect();
        colors[p.slot()] = Some((0..).find(|c| !taken.contains(c)).expect("unbounded"));
    }
    colors.into_iter().map(|c| c.expect("connected")).collect()
}

fn bfs_order(topology: &Topology, start: ProcessIndex) -> Vec<ProcessIndex> {
    let dist = topology.bfs_distances(start);
    let mut order: Vec<ProcessIndex> = topology.processes().collect();
    order.sort_by_key(|p| (dist[p.slot()], *p));
    order
}

/// Replays one TDMA frame in which every process broadcasts in the slot
/// equal to its color, and counts clash events. The frame has `Δ + 1` slots,
/// or more if some color exceeds `Δ`.
pub fn tdma_replay(topology: &Topology, colors: &[Color], delta: usize) -> usize {
    let frame = colors.iter().map(|&c| c as usize + 1).max().unwrap_or(0).max(delta + 1);
    (0..frame)
        .map(|slot| {
            let talking: BTreeSet<ProcessIndex> = topology
                .processes()
                .filter(|p| colors[p.slot()] == slot as Color)
                .collect();
            detect_clashes(topology, slot as Clock, &talking).len()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub limit: String,
    pub observed: String,
    pub pass: bool,
    /// Informational checks are reported but do not fail the report.
    #[serde(default = "yes")]
    pub gating: bool,
}

fn yes() -> bool {
    true
}

impl BoundCheck {
    fn new(name: &str, limit: impl ToString, observed: impl ToString, pass: bool) -> Self {
        BoundCheck {
            name: name.to_string(),
            limit: limit.to_string(),
            observed: observed.to_string(),
            pass,
            gating: true,
        }
    }

    fn informational(mut self) -> Self {
        self.gating = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub protocol: ProtocolKind,
    pub n: usize,
    pub delta: usize,
    pub depth: usize,
    pub status: Option<RunStatus>,
    pub claimed_by: Option<ProcessIndex>,
    pub coloring: ColoringCheck,
    /// `None` when validity does not apply (arbitrary graphs).
    pub validity: Option<bool>,
    pub consistency: bool,
    pub message_counts: BTreeMap<MessageKind, usize>,
    pub completion_round: Option<Clock>,
    /// `completion_round / (d·Δ)`.
    pub round_ratio: Option<f64>,
    pub clash_events: usize,
    pub tdma_clashes: usize,
    pub bound_checks: Vec<BoundCheck>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.validity != Some(false)
            && self.consistency
            && self.tdma_clashes == 0
            && self.bound_checks.iter().all(|b| b.pass || !b.gating)
    }

    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.bound_checks.iter().find(|b| b.name == name)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            format: &'a str,
            version: u32,
        }
        #[derive(Serialize)]
        #[serde(tag = "record", rename_all = "snake_case")]
        enum Line<'a> {
            Check(&'a BoundCheck),
            Summary {
                pass: bool,
                #[serde(flatten)]
                report: &'a VerificationReport,
            },
        }
        serde_json::to_writer(
            &mut w,
            &Header {
                format: REPORT_FORMAT,
                version: REPORT_VERSION,
            },
        )?;
        w.write_all(b"\n")?;
        for b in &self.bound_checks {
            serde_json::to_writer(&mut w, &Line::Check(b))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(
            &mut w,
            &Line::Summary {
                pass: self.passed(),
                report: self,
            },
        )?;
        w.write_all(b"\n")
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("trace topology is invalid: {0}")]
    Topology(#[from] TopologyError),
    #[error("trace has no record for {0}")]
    MissingProcess(ProcessIndex),
}

/// Derives every check from a trace alone.
pub fn verify_trace(trace: &Trace) -> Result<VerificationReport, VerifyError> {
    let scenario = &trace.header.scenario;
    let initial = trace.header.topology.clone().into_topology()?;
    let mut topology = initial.clone();
    for e in &trace.events {
        if let TraceEvent::Join { parent, identity, .. } = e {
            topology = topology.with_leaf(*parent, *identity)?.0;
        }
    }
    let n0 = initial.n();
    let metrics = initial.metrics(scenario.root);
    let delta = metrics.delta;
    let depth = metrics.depth;
    let snapshots = trace.final_snapshots();
    let colors: Vec<Option<Color>> = snapshots.iter().map(|s| s.as_ref().and_then(Snapshot::color)).collect();
    let is_tree = scenario.protocol != ProtocolKind::Arbitrary;
    let coloring = check_coloring(&topology, &colors, is_tree.then_some(delta));
    let validity = is_tree.then(|| coloring.validity_ok());
    let consistency = coloring.consistency_ok();

    let mut message_counts: BTreeMap<MessageKind, usize> = BTreeMap::new();
    let mut per_round: BTreeMap<Clock, BTreeSet<ProcessIndex>> = BTreeMap::new();
    for (round, origin, m, _) in trace.broadcasts() {
        *message_counts.entry(m.kind()).or_default() += 1;
        per_round.entry(round).or_default().insert(origin);
    }
    let count = |k: MessageKind| message_counts.get(&k).copied().unwrap_or(0);

    let recorded: BTreeSet<(Clock, ProcessIndex, ClashKind)> = trace
        .events
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Clash {
                round, victim, clash, ..
            } => Some((*round, *victim, *clash)),
            _ => None,
        })
        .collect();
    let clash_events = trace
        .events
        .iter()
        .filter(|e| matches!(e, TraceEvent::Clash { benign: false, .. }))
        .count();

    let finish = trace.finish();
    let status = finish.map(|(_, s)| s);
    let claim = trace.claim();
    let completion_round = claim.map(|(r, _)| r - scenario.start_round);
    let budget = ROUND_BOUND_FACTOR * (depth * delta) as u64;
    let round_ratio = completion_round
        .filter(|_| depth * delta > 0)
        .map(|r| r as f64 / (depth * delta) as f64);

    let mut checks = Vec::new();
    checks.push(BoundCheck::new("clash_events", 0, clash_events, clash_events == 0));

    // the trace's clash records must match a recomputation from its broadcasts
    let mut recheck: BTreeSet<(Clock, ProcessIndex, ClashKind)> = BTreeSet::new();
    let mut grown = initial.clone();
    let mut joins = trace.events.iter().filter_map(|e| match e {
        TraceEvent::Join {
            round,
            parent,
            identity,
            ..
        } => Some((*round, *parent, *identity)),
        _ => None,
    });
    let mut next_join = joins.next();
    for (&round, talking) in &per_round {
        while let Some((jr, parent, id)) = next_join {
            if jr >= round {
                break;
            }
            grown = grown.with_leaf(parent, id)?.0;
            next_join = joins.next();
        }
        for c in detect_clashes(&grown, round, talking) {
            recheck.insert((c.round, c.victim, c.kind));
        }
    }
    checks.push(BoundCheck::new(
        "clash_recheck",
        format!("{} recorded", recorded.len()),
        format!("{} recomputed", recheck.len()),
        recheck == recorded,
    ));

    let expected_status = match scenario.protocol {
        ProtocolKind::ParTree if scenario.par.end_phase => RunStatus::AllTerminal,
        _ => RunStatus::RootClaimed,
    };
    checks.push(BoundCheck::new(
        "termination",
        expected_status.as_str(),
        status.map_or("unfinished", RunStatus::as_str),
        status == Some(expected_status) && claim.map(|(_, p)| p) == Some(scenario.root),
    ));

    match scenario.protocol {
        ProtocolKind::SeqTree => {
            let term = count(MessageKind::Term);
            checks.push(BoundCheck::new("seq_term_count", n0 - 1, term, term == n0 - 1));
            let color_limit = seq_color_limit(n0, delta);
            let colors_sent = count(MessageKind::Color) as i64;
            checks.push(BoundCheck::new(
                "seq_color_count",
                color_limit,
                colors_sent,
                colors_sent <= color_limit,
            ));
            push_flow_check(&mut checks, "seq_single_broadcaster", &per_round);
            let largest = trace
                .snapshots()
                .filter_map(|(_, _, s)| s.d1colors().map(<[Color]>::len))
                .max()
                .unwrap_or(0);
            // a max-degree process ends up knowing all Δ neighbor colors,
            // so this literal form fails on every run with n >= 2
            checks.push(
                BoundCheck::new(
                    "seq_d1colors_below_delta",
                    format!("< {delta}"),
                    largest,
                    largest < delta,
                )
                .informational(),
            );
            let carried = trace
                .broadcasts()
                .filter_map(|(_, _, m, _)| match m {
                    Message::ColorSeq { d1colors, .. } => Some(d1colors.iter().filter(|&&c| c >= 0).count()),
                    _ => None,
                })
                .max()
                .unwrap_or(0);
            checks.push(BoundCheck::new(
                "seq_color_payload_below_delta",
                format!("< {}", delta.max(1)),
                carried,
                carried < delta.max(1),
            ));
            let root_max_d = snapshots.get(scenario.root.slot()).and_then(|s| match s {
                Some(Snapshot::Seq(s)) => Some(s.max_d),
                _ => None,
            });
            checks.push(BoundCheck::new(
                "seq_root_learns_delta",
                delta,
                root_max_d.map_or("-".to_string(), |m| m.to_string()),
                root_max_d == Some(delta),
            ));
        }
        ProtocolKind::ParTree => {
            let sent = count(MessageKind::Color) + count(MessageKind::Term);
            let limit = 2 * n0 - delta;
            checks.push(BoundCheck::new("par_coloring_broadcasts", limit, sent, sent <= limit));
            match completion_round {
                Some(r) if depth * delta > 0 => checks.push(BoundCheck::new(
                    "par_completion_round",
                    budget,
                    r,
                    r >= 0 && r as u64 <= budget,
                )),
                Some(r) => checks.push(BoundCheck::new("par_completion_round", "n/a (d·Δ = 0)", r, true)),
                None => checks.push(BoundCheck::new("par_completion_round", budget, "-", false)),
            }
            checks.push(BoundCheck::new(
                "par_palette",
                format!("<= {}", delta + 1),
                coloring.palette_size,
                coloring.palette_size <= delta + 1,
            ));
            let mut bad_edges = 0;
            for p in topology.processes() {
                let Some(snap) = &snapshots[p.slot()] else { continue };
                let (Some(parent_id), Some(color)) = (snap.parent(), snap.color()) else {
                    continue;
                };
                let Some(parent) = topology.resolve_local(p, parent_id).filter(|q| *q != p) else {
                    continue;
                };
                if color < 0 || color > topology.degree(parent) as Color {
                    bad_edges += 1;
                }
            }
            checks.push(BoundCheck::new(
                "par_child_color_within_parent_degree",
                0,
                bad_edges,
                bad_edges == 0,
            ));
            if scenario.par.end_phase {
                let mut not_done = 0;
                let mut wrong_max = 0;
                for s in &snapshots {
                    match s {
                        Some(Snapshot::Par(s)) => {
                            if s.state != GLOBALLY_DONE {
                                not_done += 1;
                            }
                            if s.max_nb_cl != delta + 1 {
                                wrong_max += 1;
                            }
                        }
                        _ => {
                            not_done += 1;
                            wrong_max += 1;
                        }
                    }
                }
                checks.push(BoundCheck::new("par_all_globally_done", 0, not_done, not_done == 0));
                checks.push(BoundCheck::new(
                    "par_everyone_learns_delta",
                    0,
                    wrong_max,
                    wrong_max == 0,
                ));
            }
        }
        ProtocolKind::Arbitrary => {
            push_flow_check(&mut checks, "arb_single_broadcaster", &per_round);
        }
    }

    let tdma_clashes = if coloring.uncolored.is_empty() {
        let full: Vec<Color> = colors.iter().map(|c| c.expect("all colored")).collect();
        tdma_replay(&topology, &full, topology.max_degree())
    } else {
        0
    };
    checks.push(BoundCheck::new(
        "tdma_replay",
        0,
        tdma_clashes,
        tdma_clashes == 0 && coloring.uncolored.is_empty(),
    ));

    Ok(VerificationReport {
        protocol: scenario.protocol,
        n: topology.n(),
        delta,
        depth,
        status,
        claimed_by: claim.map(|(_, p)| p),
        coloring,
        validity,
        consistency,
        message_counts,
        completion_round,
        round_ratio,
        clash_events,
        tdma_clashes,
        bound_checks: checks,
    })
}

/// `Δ + (n − Δ)(Δ − 1)`, clamped to 0 for a single process.
pub fn seq_color_limit(n: usize, delta: usize) -> i64 {
    if n <= 1 {
        return 0;
    }
    let (n, d) = (n as i64, delta as i64);
    d + (n - d) * (d - 1)
}

fn push_flow_check(checks: &mut Vec<BoundCheck>, name: &str, per_round: &BTreeMap<Clock, BTreeSet<ProcessIndex>>) {
    let widest = per_round.values().map(BTreeSet::len).max().unwrap_or(0);
    checks.push(BoundCheck::new(name, 1, widest, widest <= 1));
}
