use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use d2sim::message::MessageKind;
use d2sim::trace::Trace;
use d2sim::verifier::ROUND_BOUND_FACTOR;
use d2sim::{
    builtin, generate_random_connected_graph, generate_random_tree, run_with_order, verify_trace, ChildOrder,
    ClashPolicy, HandlerOrder, ProcessIndex, ProtocolKind, RunStatus, Scenario, ScenarioError, Topology,
};

const EXIT_VERIFY: u8 = 1;
const EXIT_PROTOCOL: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "d2sim",
    version,
    about = "Distance-2 coloring protocol simulator and verifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or export a topology file.
    Gen(GenArgs),
    /// Run a protocol and write its trace.
    Run(RunArgs),
    /// Check a trace and report every property.
    Verify(VerifyArgs),
    /// Sweep generated trees and emit one JSON row per run.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Random tree with a degree cap.
    #[arg(long, conflicts_with_all = ["builtin", "graph"], requires_all = ["n", "max_degree"])]
    tree: bool,
    /// Random connected graph with `--extra-edges` chords.
    #[arg(long, conflicts_with = "builtin", requires = "n")]
    graph: bool,
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    max_degree: Option<usize>,
    #[arg(long, default_value_t = 0)]
    extra_edges: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    FailFast,
    RecordAndCorrupt,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChildOrderArg {
    Smallest,
    Seeded,
}

#[derive(Args)]
#[group(id = "source", required = true, multiple = false)]
struct TopologySource {
    #[arg(long, group = "source")]
    builtin: Option<String>,
    #[arg(long, group = "source")]
    topology: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    protocol: ProtocolKind,
    #[command(flatten)]
    source: TopologySource,
    #[arg(long, default_value_t = 1)]
    root: usize,
    #[arg(long, default_value_t = 0)]
    start_round: i64,
    #[arg(long, default_value_t = 1_000_000)]
    max_rounds: u64,
    /// Seed for `--child-order seeded` and `--shuffle-handlers`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "on")]
    end_phase: OnOff,
    #[arg(long)]
    sibling_end_parallel: bool,
    #[arg(long)]
    root_always_ends: bool,
    #[arg(long, value_enum, default_value = "fail-fast")]
    clash_policy: PolicyArg,
    #[arg(long, value_enum, default_value = "smallest")]
    child_order: ChildOrderArg,
    /// Pin the next-child choices of the five-process example.
    #[arg(long)]
    pin_table1_choices: bool,
    /// Refuse on any known sender color (arbitrary protocol).
    #[arg(long)]
    literal_refusal: bool,
    /// Attach a new leaf at this process after coloring; repeatable.
    #[arg(long = "join")]
    joins: Vec<usize>,
    /// Run handlers in a seeded random order each round.
    #[arg(long)]
    shuffle_handlers: bool,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Must match the topology recorded in the trace.
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Defaults to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "par_tree")]
    protocol: ProtocolKind,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 50, 100, 200, 500, 1000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    max_degree: usize,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Protocol(String),
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Protocol(_) => EXIT_PROTOCOL,
            Failure::Verify(_) => EXIT_VERIFY,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Protocol(m) => eprintln!("protocol failure: {m}"),
                Failure::Verify(m) => eprintln!("verification failed: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_topology(path: &Path) -> Result<Topology, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Topology::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_gen(a: GenArgs) -> Result<(), Failure> {
    let topology = if let Some(name) = &a.builtin {
        builtin(name).map_err(usage)?
    } else if a.tree {
        generate_random_tree(a.n.unwrap_or(0), a.max_degree.unwrap_or(0), a.seed).map_err(usage)?
    } else if a.graph {
        generate_random_connected_graph(a.n.unwrap_or(0), a.extra_edges, a.seed).map_err(usage)?
    } else {
        return Err(usage("one of --tree, --graph or --builtin is required"));
    };
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "{}", topology.to_json()).map_err(usage)?;
    w.flush().map_err(usage)?;
    let m = topology.metrics(ProcessIndex(1));
    eprintln!("n={} delta={} depth={}", topology.n(), m.delta, m.depth);
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let topology = match (&a.source.builtin, &a.source.topology) {
        (Some(name), _) => builtin(name).map_err(usage)?,
        (_, Some(path)) => read_topology(path)?,
        _ => unreachable!("clap enforces one source"),
    };
    let mut scenario = if a.pin_table1_choices {
        Scenario::table1()
    } else {
        Scenario::new(a.protocol)
    };
    scenario.protocol = a.protocol;
    scenario.root = ProcessIndex(a.root);
    scenario.start_round = a.start_round;
    scenario.max_rounds = a.max_rounds;
    scenario.clash_policy = match a.clash_policy {
        PolicyArg::FailFast => ClashPolicy::FailFast,
        PolicyArg::RecordAndCorrupt => ClashPolicy::RecordAndCorrupt,
    };
    scenario.par.end_phase = matches!(a.end_phase, OnOff::On);
    scenario.par.sibling_end_parallel = a.sibling_end_parallel;
    scenario.par.root_always_ends = a.root_always_ends;
    scenario.child_order = match a.child_order {
        ChildOrderArg::Smallest => ChildOrder::Smallest,
        ChildOrderArg::Seeded => ChildOrder::Seeded { seed: a.seed },
    };
    scenario.literal_refusal = a.literal_refusal;
    scenario.joins = a.joins.iter().copied().map(ProcessIndex).collect();
    let order = if a.shuffle_handlers {
        HandlerOrder::Shuffled(a.seed)
    } else {
        HandlerOrder::Ascending
    };

    match run_with_order(&topology, &scenario, order) {
        Ok(outcome) => {
            if let Some(path) = &a.trace {
                write_trace(path, &outcome.trace)?;
            }
            let colors: Vec<_> = outcome.colors.iter().flatten().copied().collect();
            let palette = colors.iter().collect::<std::collections::BTreeSet<_>>().len();
            println!("status: {}", outcome.status.as_str());
            println!("rounds: {}", outcome.rounds + 1);
            println!("broadcasts: {}", outcome.broadcast_count());
            println!("palette: {palette}");
            println!(
                "colors: {}",
                outcome
                    .colors
                    .iter()
                    .map(|c| c.map_or("-".to_string(), |c| c.to_string()))
                    .collect::<Vec<_>>()
                    .join(" ")
            );
            Ok(())
        }
        Err(e @ (ScenarioError::NeedsTree { .. } | ScenarioError::UnknownRoot(_))) => Err(usage(e)),
        Err(e) => {
            if let (Some(path), Some(trace)) = (&a.trace, e.trace()) {
                write_trace(path, trace)?;
            }
            if let ScenarioError::Sim {
                source: d2sim::SimError::ClashDetected { events, .. },
                ..
            } = &e
            {
                for ev in events {
                    eprintln!(
                        "clash: round {} at {} ({:?}) by {:?}",
                        ev.round, ev.victim, ev.kind, ev.participants
                    );
                }
            }
            Err(Failure::Protocol(e.to_string()))
        }
    }
}

fn write_trace(path: &Path, trace: &Trace) -> Result<(), Failure> {
    let mut w = output(Some(path))?;
    trace.write_to(&mut w).map_err(usage)?;
    w.flush().map_err(usage)
}

fn cmd_verify(a: VerifyArgs) -> Result<(), Failure> {
    let file = File::open(&a.trace).map_err(|e| usage(format!("{}: {e}", a.trace.display())))?;
    let trace = Trace::read_from(BufReader::new(file)).map_err(|e| usage(format!("{}: {e}", a.trace.display())))?;
    if let Some(path) = &a.topology {
        let given = read_topology(path)?;
        let recorded = trace.header.topology.clone().into_topology().map_err(usage)?;
        if given != recorded {
            return Err(Failure::Verify(format!(
                "{} does not match the topology recorded in the trace",
                path.display()
            )));
        }
    }
    let report = verify_trace(&trace).map_err(usage)?;
    let mut w = output(a.report.as_deref())?;
    report.write_jsonl(&mut w).map_err(usage)?;
    w.flush().map_err(usage)?;
    drop(w);
    if report.passed() {
        eprintln!("verify: pass");
        Ok(())
    } else {
        let failed: Vec<_> = report
            .bound_checks
            .iter()
            .filter(|b| !b.pass && b.gating)
            .map(|b| b.name.as_str())
            .chain((!report.consistency).then_some("consistency"))
            .chain((report.validity == Some(false)).then_some("validity"))
            .collect();
        Err(Failure::Verify(failed.join(", ")))
    }
}

#[derive(Serialize)]
struct BenchRow {
    protocol: ProtocolKind,
    n: usize,
    seed: u64,
    delta: usize,
    depth: usize,
    status: RunStatus,
    rounds: Option<i64>,
    broadcasts: usize,
    coloring_broadcasts: usize,
    term_messages: usize,
    ratio: Option<f64>,
    within_round_bound: Option<bool>,
    verified: bool,
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let mut w = output(a.out.as_deref())?;
    let mut all_ok = true;
    for &n in &a.sizes {
        for seed in a.first_seed..a.first_seed + a.seeds {
            let topology = match a.protocol {
                ProtocolKind::Arbitrary => generate_random_connected_graph(n, n / 4, seed),
                _ => generate_random_tree(n, a.max_degree, seed),
            }
            .map_err(usage)?;
            let mut scenario = Scenario::new(a.protocol);
            scenario.par.root_always_ends = true;
            let outcome = run_with_order(&topology, &scenario, HandlerOrder::Ascending)
                .map_err(|e| Failure::Protocol(format!("n={n} seed={seed}: {e}")))?;
            let report = verify_trace(&outcome.trace).map_err(usage)?;
            let count = |k: MessageKind| report.message_counts.get(&k).copied().unwrap_or(0);
            let coloring_broadcasts = count(MessageKind::Color) + count(MessageKind::Term);
            let term_messages = count(MessageKind::Term);
            let dd = (report.depth * report.delta) as i64;
            let within = report
                .completion_round
                .filter(|_| dd > 0)
                .map(|r| r <= ROUND_BOUND_FACTOR as i64 * dd);
            all_ok &= report.passed() && within != Some(false);
            let row = BenchRow {
                protocol: a.protocol,
                n,
                seed,
                delta: report.delta,
                depth: report.depth,
                status: outcome.status,
                rounds: report.completion_round,
                broadcasts: outcome.broadcast_count(),
                coloring_broadcasts,
                term_messages,
                ratio: report.round_ratio,
                within_round_bound: within,
                verified: report.passed(),
            };
            serde_json::to_writer(&mut w, &row).map_err(usage)?;
            writeln!(w).map_err(usage)?;
        }
    }
    w.flush().map_err(usage)?;
    if all_ok {
        Ok(())
    } else {
        Err(Failure::Verify("at least one bench row failed verification".into()))
    }
}
