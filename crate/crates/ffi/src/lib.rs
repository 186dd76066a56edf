//! C ABI over the d2sim simulator.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`D2Status`]; the message of the last failure on the calling thread is
//! available from [`d2_last_error`]. Strings returned by the library are
//! released with [`d2_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use d2sim::{
    builtin, generate_random_connected_graph, generate_random_tree, verify_trace, ClashPolicy, ProcessIndex,
    ProtocolKind, RunOutcome, RunStatus, Scenario, Topology, Trace, VerificationReport,
};

/// Written into color buffers for processes that never got a color.
pub const D2_UNCOLORED: i64 = i64::MIN;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2Status {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidTopology = 3,
    InvalidArgument = 4,
    ProtocolFailure = 5,
    InvalidTrace = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2Protocol {
    SeqTree = 0,
    ParTree = 1,
    Arbitrary = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2RunStatus {
    RootClaimed = 0,
    AllTerminal = 1,
    Partial = 2,
    BudgetExhausted = 3,
}

/// Scenario knobs. Start from [`d2_run_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct D2RunOptions {
    pub protocol: D2Protocol,
    /// 1-based process index.
    pub root: usize,
    pub start_round: i64,
    pub max_rounds: u64,
    pub end_phase: bool,
    pub sibling_end_parallel: bool,
    pub root_always_ends: bool,
    /// Keep going after a clash instead of failing the run.
    pub record_and_corrupt: bool,
    /// Pin the traversal choices of the five-process example.
    pub pin_table1_choices: bool,
    pub literal_refusal: bool,
}

pub struct D2Topology(Topology);

pub struct D2Outcome(RunOutcome);

pub struct D2Report(VerificationReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: D2Status, message: impl Into<String>) -> D2Status {
    set_error(message);
    status
}

/// Runs `body`, turning a panic into [`D2Status::Panic`].
fn guarded(body: impl FnOnce() -> D2Status) -> D2Status {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail(D2Status::Panic, format!("panic: {what}"))
        }
    }
}

unsafe fn read_str<'a>(text: *const c_char) -> Result<&'a str, D2Status> {
    if text.is_null() {
        return Err(fail(D2Status::NullArgument, "string argument is null"));
    }
    CStr::from_ptr(text)
        .to_str()
        .map_err(|e| fail(D2Status::InvalidUtf8, e.to_string()))
}

fn into_c_string(text: String) -> *mut c_char {
    match CString::new(text) {
        Ok(s) => s.into_raw(),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> D2Status {
    *out = Box::into_raw(Box::new(value));
    D2Status::Ok
}

fn topology_result(out: *mut *mut D2Topology, made: Result<Topology, d2sim::TopologyError>) -> D2Status {
    if out.is_null() {
        return fail(D2Status::NullArgument, "out is null");
    }
    match made {
        // SAFETY: `out` checked non-null; the caller guarantees it is writable.
        Ok(t) => unsafe { emit(out, D2Topology(t)) },
        Err(e) => fail(D2Status::InvalidTopology, e.to_string()),
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn d2_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` is null or a string returned by this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn d2_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `name` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn d2_topology_builtin(name: *const c_char, out: *mut *mut D2Topology) -> D2Status {
    guarded(|| match read_str(name) {
        Ok(name) => topology_result(out, builtin(name)),
        Err(status) => status,
    })
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn d2_topology_random_tree(
    n: usize,
    max_degree: usize,
    seed: u64,
    out: *mut *mut D2Topology,
) -> D2Status {
    guarded(|| topology_result(out, generate_random_tree(n, max_degree, seed)))
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn d2_topology_random_graph(
    n: usize,
    extra_edges: usize,
    seed: u64,
    out: *mut *mut D2Topology,
) -> D2Status {
    guarded(|| topology_result(out, generate_random_connected_graph(n, extra_edges, seed)))
}

/// Parses the JSON topology file format.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn d2_topology_from_json(json: *const c_char, out: *mut *mut D2Topology) -> D2Status {
    guarded(|| match read_str(json) {
        Ok(text) => topology_result(out, Topology::from_json(text)),
        Err(status) => status,
    })
}

/// # Safety
/// `topology` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2_topology_to_json(topology: *const D2Topology) -> *mut c_char {
    match topology.as_ref() {
        Some(t) => into_c_string(t.0.to_json()),
        None => {
            set_error("topology is null");
            ptr::null_mut()
        }
    }
}

/// Process count; 0 for a null handle.
///
/// # Safety
/// `topology` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2_topology_n(topology: *const D2Topology) -> usize {
    topology.as_ref().map_or(0, |t| t.0.n())
}

/// Maximum degree; 0 for a null handle.
///
/// # Safety
/// `topology` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2_topology_max_degree(topology: *const D2Topology) -> usize {
    topology.as_ref().map_or(0, |t| t.0.max_degree())
}

/// # Safety
/// `topology` is null or a handle not freed yet.
#[no_mangle]
pub unsafe extern "C" fn d2_topology_free(topology: *mut D2Topology) {
    if !topology.is_null() {
        drop(Box::from_raw(topology));
    }
}

/// Defaults: root 1, start round 0, a budget of one million rounds, END
/// phase on, fail on the first clash.
#[no_mangle]
pub extern "C" fn d2_run_options_default(protocol: D2Protocol) -> D2RunOptions {
    let s = Scenario::new(protocol_kind(protocol));
    D2RunOptions {
        protocol,
        root: s.root.0,
        start_round: s.start_round,
        max_rounds: s.max_rounds,
        end_phase: s.par.end_phase,
        sibling_end_parallel: s.par.sibling_end_parallel,
        root_always_ends: s.par.root_always_ends,
        record_and_corrupt: false,
        pin_table1_choices: false,
        literal_refusal: s.literal_refusal,
    }
}

fn protocol_kind(p: D2Protocol) -> ProtocolKind {
    match p {
        D2Protocol::SeqTree => ProtocolKind::SeqTree,
        D2Protocol::ParTree => ProtocolKind::ParTree,
        D2Protocol::Arbitrary => ProtocolKind::Arbitrary,
    }
}

fn scenario(o: &D2RunOptions) -> Scenario {
    let mut s = if o.pin_table1_choices {
        Scenario::table1()
    } else {
        Scenario::new(protocol_kind(o.protocol))
    };
    s.protocol = protocol_kind(o.protocol);
    s.root = ProcessIndex(o.root);
    s.start_round = o.start_round;
    s.max_rounds = o.max_rounds;
    s.par.end_phase = o.end_phase;
    s.par.sibling_end_parallel = o.sibling_end_parallel;
    s.par.root_always_ends = o.root_always_ends;
    s.clash_policy = if o.record_and_corrupt {
        ClashPolicy::RecordAndCorrupt
    } else {
        ClashPolicy::FailFast
    };
    s.literal_refusal = o.literal_refusal;
    s
}

/// Runs one simulation. A clash or protocol violation returns
/// [`D2Status::ProtocolFailure`] and leaves `*out` untouched.
///
/// # Safety
/// `topology` is a live handle, `options` points to a valid struct and
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn d2_run(
    topology: *const D2Topology,
    options: *const D2RunOptions,
    out: *mut *mut D2Outcome,
) -> D2Status {
    guarded(|| {
        let (Some(t), Some(o)) = (topology.as_ref(), options.as_ref()) else {
            return fail(D2Status::NullArgument, "topology or options is null");
        };
        if out.is_null() {
            return fail(D2Status::NullArgument, "out is null");
        }
        match d2sim::run(&t.0, &scenario(o)) {
            Ok(outcome) => emit(out, D2Outcome(outcome)),
            Err(e @ (d2sim::ScenarioError::NeedsTree { .. } | d2sim::ScenarioError::UnknownRoot(_))) => {
                fail(D2Status::InvalidArgument, e.to_string())
            }
            Err(e) => fail(D2Status::ProtocolFailure, e.to_string()),
        }
    })
}

/// # Safety
/// `outcome` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2_outcome_status(outcome: *const D2Outcome) -> D2RunStatus {
    match outcome.as_ref().map(|o| o.0.status) {
        Some(RunStatus::RootClaimed) => D2RunStatus::RootClaimed,
        Some(RunStatus::AllTerminal) => D2RunStatus::AllTerminal,
        Some(RunStatus::Partial) => D2RunStatus::Partial,
        Some(RunStatus::BudgetExhausted) | None => D2RunStatus::BudgetExhausted,
    }
}

/// Number of executed rounds; 0 for a null handle.
///
/// # Safety
/// `outcome` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2_outcome_rounds(outcome: *const D2Outcome) -> i64 {
    outcome.as_ref().map_or(0, |o| o.0.rounds + 1)
}

/// Process count after joins; 0 for a null handle.
///
/// # Safety
/// `outcome` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2_outcome_n(outcome: *const D2Outcome) -> usize {
    outcome.as_ref().map_or(0, |o| o.0.colors.len())
}

/// Copies final colors into `buf` (one per process, [`D2_UNCOLORED`] where
/// missing) and stores the count in `*written`. With a short buffer nothing
/// is copied, `*written` holds the required length and the call returns
/// [`D2Status::BufferTooSmall`].
///
/// # Safety
/// `outcome` is a live handle, `buf` has room for `len` values (or is null
/// when `len` is 0) and `written` is writable.
#[no_mangle]
pub unsafe extern "C" fn d2_outcome_colors(
    outcome: *const D2Outcome,
    buf: *mut i64,
    len: usize,
    written: *mut usize,
) -> D2Status {
    guarded(|| {
        let Some(o) = outcome.as_ref() else {
            return fail(D2Status::NullArgument, "outcome is null");
        };
        if written.is_null() {
            return fail(D2Status::NullArgument, "written is null");
        }
        let colors = &o.0.colors;
        *written = colors.len();
        if len < colors.len() {
            return fail(
                D2Status::BufferTooSmall,
                format!("need room for {} colors", colors.len()),
            );
        }
        if buf.is_null() && !colors.is_empty() {
            return fail(D2Status::NullArgument, "buf is null");
        }
        for (i, c) in colors.iter().enumerate() {
            *buf.add(i) = c.unwrap_or(D2_UNCOLORED);
        }
        D2Status::Ok
    })
}

/// The recorded trace as JSON lines; free with [`d2_string_free`].
///
/// # Safety
/// `outcome` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2_outcome_trace_jsonl(outcome: *const D2Outcome) -> *mut c_char {
    match outcome.as_ref() {
        Some(o) => into_c_string(o.0.trace.to_jsonl()),
        None => {
            set_error("outcome is null");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `outcome` is null or a handle not freed yet.
#[no_mangle]
pub unsafe extern "C" fn d2_outcome_free(outcome: *mut D2Outcome) {
    if !outcome.is_null() {
        drop(Box::from_raw(outcome));
    }
}

fn report_result(out: *mut *mut D2Report, trace: &Trace) -> D2Status {
    if out.is_null() {
        return fail(D2Status::NullArgument, "out is null");
    }
    match verify_trace(trace) {
        // SAFETY: `out` checked non-null; the caller guarantees it is writable.
        Ok(r) => unsafe { emit(out, D2Report(r)) },
        Err(e) => fail(D2Status::InvalidTrace, e.to_string()),
    }
}

/// Verifies the trace of a finished run.
///
/// # Safety
/// `outcome` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn d2_verify_outcome(outcome: *const D2Outcome, out: *mut *mut D2Report) -> D2Status {
    guarded(|| match outcome.as_ref() {
        Some(o) => report_result(out, &o.0.trace),
        None => fail(D2Status::NullArgument, "outcome is null"),
    })
}

/// Parses and verifies a JSON-lines trace.
///
/// # Safety
/// `jsonl` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn d2_verify_trace_jsonl(jsonl: *const c_char, out: *mut *mut D2Report) -> D2Status {
    guarded(|| {
        let text = match read_str(jsonl) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match Trace::parse(text) {
            Ok(trace) => report_result(out, &trace),
            Err(e) => fail(D2Status::InvalidTrace, e.to_string()),
        }
    })
}

/// Every gating check passed; false for a null handle.
///
/// # Safety
/// `report` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2_report_passed(report: *const D2Report) -> bool {
    report.as_ref().is_some_and(|r| r.0.passed())
}

/// # Safety
/// `report` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2_report_consistent(report: *const D2Report) -> bool {
    report.as_ref().is_some_and(|r| r.0.consistency)
}

/// # Safety
/// `report` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2_report_clash_events(report: *const D2Report) -> usize {
    report.as_ref().map_or(0, |r| r.0.clash_events)
}

/// The report as JSON lines; free with [`d2_string_free`].
///
/// # Safety
/// `report` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2_report_jsonl(report: *const D2Report) -> *mut c_char {
    let Some(r) = report.as_ref() else {
        set_error("report is null");
        return ptr::null_mut();
    };
    let mut buf = Vec::new();
    match r.0.write_jsonl(&mut buf) {
        Ok(()) => into_c_string(String::from_utf8_lossy(&buf).into_owned()),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `report` is null or a handle not freed yet.
#[no_mangle]
pub unsafe extern "C" fn d2_report_free(report: *mut D2Report) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
