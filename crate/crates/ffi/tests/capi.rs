use std::ffi::{CStr, CString};
use std::ptr;

use d2sim_ffi::*;

fn last_error() -> String {
    let p = d2_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { d2_string_free(p) };
    s
}

fn topology(name: &str) -> *mut D2Topology {
    let name = CString::new(name).unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { d2_topology_builtin(name.as_ptr(), &mut t) }, D2Status::Ok);
    t
}

fn colors(o: *const D2Outcome) -> Vec<i64> {
    let n = unsafe { d2_outcome_n(o) };
    let mut buf = vec![0i64; n];
    let mut written = 0;
    assert_eq!(
        unsafe { d2_outcome_colors(o, buf.as_mut_ptr(), buf.len(), &mut written) },
        D2Status::Ok
    );
    assert_eq!(written, n);
    buf
}

#[test]
fn table1_replay_through_the_c_api() {
    let t = topology("table1");
    let mut opts = d2_run_options_default(D2Protocol::Arbitrary);
    opts.pin_table1_choices = true;
    opts.max_rounds = 100;
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { d2_run(t, &opts, &mut o) }, D2Status::Ok);
    assert_eq!(unsafe { d2_outcome_status(o) }, D2RunStatus::RootClaimed);
    assert_eq!(colors(o), [0, 1, 3, 2, 2]);

    let mut r = ptr::null_mut();
    assert_eq!(unsafe { d2_verify_outcome(o, &mut r) }, D2Status::Ok);
    assert!(unsafe { d2_report_passed(r) });
    assert!(unsafe { d2_report_consistent(r) });
    assert_eq!(unsafe { d2_report_clash_events(r) }, 0);
    let report = take_string(unsafe { d2_report_jsonl(r) });
    assert!(report.lines().count() > 1);

    let trace = CString::new(take_string(unsafe { d2_outcome_trace_jsonl(o) })).unwrap();
    let mut r2 = ptr::null_mut();
    assert_eq!(unsafe { d2_verify_trace_jsonl(trace.as_ptr(), &mut r2) }, D2Status::Ok);
    assert!(unsafe { d2_report_passed(r2) });

    unsafe {
        d2_report_free(r2);
        d2_report_free(r);
        d2_outcome_free(o);
        d2_topology_free(t);
    }
}

#[test]
fn generated_topologies_round_trip_through_json() {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { d2_topology_random_tree(64, 4, 9, &mut t) }, D2Status::Ok);
    assert_eq!(unsafe { d2_topology_n(t) }, 64);
    assert!(unsafe { d2_topology_max_degree(t) } <= 4);
    let json = CString::new(take_string(unsafe { d2_topology_to_json(t) })).unwrap();
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { d2_topology_from_json(json.as_ptr(), &mut back) }, D2Status::Ok);
    let again = take_string(unsafe { d2_topology_to_json(back) });
    assert_eq!(again, json.to_str().unwrap());

    let mut g = ptr::null_mut();
    assert_eq!(unsafe { d2_topology_random_graph(20, 5, 3, &mut g) }, D2Status::Ok);
    unsafe {
        d2_topology_free(g);
        d2_topology_free(back);
        d2_topology_free(t);
    }
}

#[test]
fn par_run_reports_every_process() {
    let t = topology("binary15");
    let mut opts = d2_run_options_default(D2Protocol::ParTree);
    opts.root_always_ends = true;
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { d2_run(t, &opts, &mut o) }, D2Status::Ok);
    assert_eq!(unsafe { d2_outcome_status(o) }, D2RunStatus::AllTerminal);
    assert!(colors(o).iter().all(|&c| (0..=3).contains(&c)));
    assert!(unsafe { d2_outcome_rounds(o) } > 0);
    unsafe {
        d2_outcome_free(o);
        d2_topology_free(t);
    }
}

#[test]
fn short_buffers_report_the_needed_length() {
    let t = topology("star4");
    let opts = d2_run_options_default(D2Protocol::SeqTree);
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { d2_run(t, &opts, &mut o) }, D2Status::Ok);
    let mut buf = [0i64; 2];
    let mut written = 0;
    let status = unsafe { d2_outcome_colors(o, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(status, D2Status::BufferTooSmall);
    assert_eq!(written, 5);
    assert_eq!(buf, [0, 0]);
    unsafe {
        d2_outcome_free(o);
        d2_topology_free(t);
    }
}

#[test]
fn errors_carry_a_status_and_a_message() {
    let mut t = ptr::null_mut();
    assert_eq!(
        unsafe { d2_topology_random_tree(5, 1, 0, &mut t) },
        D2Status::InvalidTopology
    );
    assert!(t.is_null());
    assert!(last_error().contains("maximum degree"));

    let bad = CString::new("{not json").unwrap();
    assert_eq!(
        unsafe { d2_topology_from_json(bad.as_ptr(), &mut t) },
        D2Status::InvalidTopology
    );

    let table1 = topology("table1");
    let mut o = ptr::null_mut();
    let opts = d2_run_options_default(D2Protocol::SeqTree);
    assert_eq!(unsafe { d2_run(table1, &opts, &mut o) }, D2Status::InvalidArgument);
    assert!(last_error().contains("tree"));
    assert!(o.is_null());

    let mut r = ptr::null_mut();
    let junk = CString::new("{}\n").unwrap();
    assert_eq!(
        unsafe { d2_verify_trace_jsonl(junk.as_ptr(), &mut r) },
        D2Status::InvalidTrace
    );
    assert!(r.is_null());
    unsafe { d2_topology_free(table1) };
}

#[test]
fn clashes_surface_as_protocol_failures() {
    let found = (0..400u64).find_map(|seed| {
        let mut t = ptr::null_mut();
        assert_eq!(unsafe { d2_topology_random_graph(30, 12, seed, &mut t) }, D2Status::Ok);
        let opts = d2_run_options_default(D2Protocol::Arbitrary);
        let mut o = ptr::null_mut();
        let status = unsafe { d2_run(t, &opts, &mut o) };
        unsafe {
            d2_outcome_free(o);
            d2_topology_free(t);
        }
        (status == D2Status::ProtocolFailure).then(last_error)
    });
    assert!(found.expect("a clashing graph").contains("clash"));
}
