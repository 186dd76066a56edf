//! Drives the `d2sim` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use d2sim::{generate_random_connected_graph, run, ProtocolKind, Scenario, ScenarioError, Snapshot, Trace};
use serde_json::Value;

fn d2sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_d2sim"))
        .args(args)
        .output()
        .expect("spawn d2sim")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_is_deterministic() {
    let args = ["gen", "--tree", "--n", "100", "--max-degree", "4", "--seed", "17"];
    let a = d2sim(&args);
    let b = d2sim(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let t = d2sim::Topology::from_json(&stdout(&a)).unwrap();
    assert_eq!(t, d2sim::generate_random_tree(100, 4, 17).unwrap());
    assert!(String::from_utf8_lossy(&a.stderr).contains("n=100"));
}

#[test]
fn infeasible_cap_is_a_usage_error() {
    let out = d2sim(&["gen", "--tree", "--n", "5", "--max-degree", "1"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(code(&d2sim(&["run", "--protocol", "seq_tree"])), 3);
    assert_eq!(code(&d2sim(&["run", "--protocol", "nope", "--builtin", "path3"])), 3);
    assert_eq!(
        code(&d2sim(&["run", "--protocol", "seq_tree", "--builtin", "table1"])),
        3
    );
    assert_eq!(code(&d2sim(&["--help"])), 0);
}

#[test]
fn table1_run_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t1.jsonl");
    let report = dir.path().join("t1.report.jsonl");
    let out = d2sim(&[
        "run",
        "--protocol",
        "arbitrary",
        "--builtin",
        "table1",
        "--pin-table1-choices",
        "--trace",
        path_str(&trace),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("status: root_claimed"), "{text}");
    assert!(text.contains("colors: 0 1 3 2 2"), "{text}");

    let topo = dir.path().join("t1.json");
    assert_eq!(
        code(&d2sim(&["gen", "--builtin", "table1", "--out", path_str(&topo)])),
        0
    );
    let v = d2sim(&[
        "verify",
        "--trace",
        path_str(&trace),
        "--topology",
        path_str(&topo),
        "--report",
        path_str(&report),
    ]);
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stderr));
    let lines = std::fs::read_to_string(&report).unwrap();
    for line in lines.lines() {
        serde_json::from_str::<Value>(line).expect("report line is JSON");
    }

    let other = dir.path().join("path3.json");
    d2sim(&["gen", "--builtin", "path3", "--out", path_str(&other)]);
    let mismatch = d2sim(&["verify", "--trace", path_str(&trace), "--topology", path_str(&other)]);
    assert_eq!(code(&mismatch), 1);
}

#[test]
fn tampered_trace_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("seq.jsonl");
    let out = d2sim(&[
        "run",
        "--protocol",
        "seq_tree",
        "--builtin",
        "path3",
        "--trace",
        path_str(&file),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(code(&d2sim(&["verify", "--trace", path_str(&file)])), 0);

    let mut trace = Trace::parse(&std::fs::read_to_string(&file).unwrap()).unwrap();
    // give the leaf the root's color: they are two hops apart
    for e in trace.events.iter_mut().rev() {
        if let d2sim::TraceEvent::State {
            process,
            snapshot: Snapshot::Seq(s),
            ..
        } = e
        {
            if process.0 == 3 {
                s.color = Some(0);
                break;
            }
        }
    }
    std::fs::write(&file, trace.to_jsonl()).unwrap();
    let v = d2sim(&["verify", "--trace", path_str(&file)]);
    assert_eq!(code(&v), 1);
    assert!(String::from_utf8_lossy(&v.stderr).contains("consistency"));
}

#[test]
fn zero_round_budget() {
    let out = d2sim(&[
        "run",
        "--protocol",
        "par_tree",
        "--builtin",
        "star4",
        "--max-rounds",
        "0",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("status: budget_exhausted"));
}

#[test]
fn clash_exits_with_protocol_failure_and_keeps_the_partial_trace() {
    let seed = (0..400u64)
        .find(|&seed| {
            let t = generate_random_connected_graph(30, 12, seed).unwrap();
            matches!(
                run(&t, &Scenario::new(ProtocolKind::Arbitrary)),
                Err(ScenarioError::Sim { .. })
            )
        })
        .expect("a clashing graph");
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("g.json");
    let trace = dir.path().join("g.jsonl");
    let seed = seed.to_string();
    let g = d2sim(&[
        "gen",
        "--graph",
        "--n",
        "30",
        "--extra-edges",
        "12",
        "--seed",
        &seed,
        "--out",
        path_str(&topo),
    ]);
    assert_eq!(code(&g), 0);
    let out = d2sim(&[
        "run",
        "--protocol",
        "arbitrary",
        "--topology",
        path_str(&topo),
        "--trace",
        path_str(&trace),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("clash"));
    assert!(Trace::parse(&std::fs::read_to_string(&trace).unwrap()).is_ok());
}

#[test]
fn join_through_the_cli() {
    let out = d2sim(&[
        "run",
        "--protocol",
        "par_tree",
        "--builtin",
        "path3",
        "--root-always-ends",
        "--join",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let colors = text.lines().find(|l| l.starts_with("colors:")).unwrap();
    assert_eq!(colors.split_whitespace().count(), 5);
}

#[test]
fn bench_emits_one_verified_row_per_run() {
    let out = d2sim(&["bench", "--sizes", "10,40", "--seeds", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        assert_eq!(row["verified"], Value::Bool(true));
        assert_eq!(row["within_round_bound"], Value::Bool(true));
        assert_eq!(row["protocol"], "par_tree");
    }
}
