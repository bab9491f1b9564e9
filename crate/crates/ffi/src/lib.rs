//! C ABI for prefclm.
//!
//! Every fallible call returns a [`PrefclmStatus`]; on failure the message is
//! available from [`prefclm_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function. Strings returned
//! through `char **` out-parameters are owned by the caller and released with
//! [`prefclm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use prefclm::dsl::EvalProgram;
use prefclm::dst::{self, ScorePair};
use prefclm::envs::EnvSpec;
use prefclm::model::{RunConfig, Segment};
use prefclm::pbrl::{curve_csv, Run, RunOptions};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrefclmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Eval = 4,
    InvalidConfig = 5,
    Run = 6,
    Fusion = 7,
    Json = 8,
    UnknownEnv = 9,
    Panic = 10,
}

/// Fused masses for one pair.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PrefclmFusion {
    pub m_s0: f64,
    pub m_s1: f64,
    pub m_both: f64,
    pub conflict: f64,
    /// 0, 0.5 or 1.
    pub label: f64,
}

/// A parsed evaluation program.
pub struct PrefclmProgram {
    inner: EvalProgram,
}

/// A training run driven step by step from the caller's thread.
pub struct PrefclmRun {
    inner: Run,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: PrefclmStatus, msg: impl Into<String>) -> PrefclmStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PrefclmStatus) -> PrefclmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(PrefclmStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, PrefclmStatus> {
    if p.is_null() {
        return Err(fail(PrefclmStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PrefclmStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> PrefclmStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            PrefclmStatus::Ok
        }
        Err(_) => fail(PrefclmStatus::Json, "string contains a NUL byte"),
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn prefclm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn prefclm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn prefclm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `source` against the feature schema of `env_name`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prefclm_program_parse(
    env_name: *const c_char,
    source: *const c_char,
    out: *mut *mut PrefclmProgram,
) -> PrefclmStatus {
    guard(|| {
        if out.is_null() {
            return fail(PrefclmStatus::NullArgument, "out is null");
        }
        let (env_name, source) = match (str_arg(env_name, "env_name"), str_arg(source, "source")) {
            (Ok(e), Ok(s)) => (e, s),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let Some(env) = EnvSpec::by_name(env_name) else {
            return fail(PrefclmStatus::UnknownEnv, format!("unknown environment {env_name:?}"));
        };
        match EvalProgram::parse_for(&env, source) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(PrefclmProgram { inner: p }));
                PrefclmStatus::Ok
            }
            Err(d) => fail(PrefclmStatus::Parse, d.to_string()),
        }
    })
}

/// # Safety
/// `program` must be NULL or a handle from [`prefclm_program_parse`].
#[no_mangle]
pub unsafe extern "C" fn prefclm_program_free(program: *mut PrefclmProgram) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

/// Scores one segment given as JSON (the library's `Segment` encoding).
///
/// # Safety
/// `program` must be a live handle; `segment_json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn prefclm_program_score(
    program: *const PrefclmProgram,
    segment_json: *const c_char,
    out: *mut f64,
) -> PrefclmStatus {
    guard(|| {
        if program.is_null() || out.is_null() {
            return fail(PrefclmStatus::NullArgument, "program or out is null");
        }
        let text = match str_arg(segment_json, "segment_json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let seg: Segment = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(PrefclmStatus::Json, e.to_string()),
        };
        match (*program).inner.score(&seg) {
            Ok(v) => {
                *out = v;
                PrefclmStatus::Ok
            }
            Err(e) => fail(PrefclmStatus::Eval, e.to_string()),
        }
    })
}

/// Canonical source text of a program.
///
/// # Safety
/// `program` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn prefclm_program_print(program: *const PrefclmProgram, out: *mut *mut c_char) -> PrefclmStatus {
    guard(|| {
        if program.is_null() || out.is_null() {
            return fail(PrefclmStatus::NullArgument, "program or out is null");
        }
        put_string(out, (*program).inner.print())
    })
}

/// Dempster-Shafer fusion of `n` agents' scores for one pair.
///
/// # Safety
/// `rho0` and `rho1` must point to `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn prefclm_fuse(
    rho0: *const f64,
    rho1: *const f64,
    n: usize,
    phi: f64,
    out: *mut PrefclmFusion,
) -> PrefclmStatus {
    guard(|| {
        if rho0.is_null() || rho1.is_null() || out.is_null() {
            return fail(PrefclmStatus::NullArgument, "rho0, rho1 or out is null");
        }
        let a = std::slice::from_raw_parts(rho0, n);
        let b = std::slice::from_raw_parts(rho1, n);
        let pairs: Vec<ScorePair> = a.iter().zip(b).map(|(x, y)| ScorePair::new(*x, *y)).collect();
        match dst::fuse_crowd(&pairs, phi) {
            Ok(r) => {
                *out = PrefclmFusion {
                    m_s0: r.fused.m_s0,
                    m_s1: r.fused.m_s1,
                    m_both: r.fused.m_both,
                    conflict: r.conflict_total,
                    label: r.label.value(),
                };
                PrefclmStatus::Ok
            }
            Err(e) => fail(PrefclmStatus::Fusion, e.to_string()),
        }
    })
}

/// Creates a run from a JSON config (missing fields take defaults).
/// `run_dir` may be NULL for a run without files.
///
/// # Safety
/// Strings NUL-terminated (or `run_dir` NULL); `out` writable.
#[no_mangle]
pub unsafe extern "C" fn prefclm_run_new(
    config_json: *const c_char,
    run_dir: *const c_char,
    out: *mut *mut PrefclmRun,
) -> PrefclmStatus {
    guard(|| {
        if out.is_null() {
            return fail(PrefclmStatus::NullArgument, "out is null");
        }
        let text = match str_arg(config_json, "config_json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let dir = if run_dir.is_null() {
            None
        } else {
            match str_arg(run_dir, "run_dir") {
                Ok(d) => Some(PathBuf::from(d)),
                Err(s) => return s,
            }
        };
        let cfg: RunConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(PrefclmStatus::Json, e.to_string()),
        };
        if let Err(e) = cfg.validate() {
            return fail(PrefclmStatus::InvalidConfig, e.to_string());
        }
        let opts = RunOptions {
            run_dir: dir,
            ..Default::default()
        };
        match Run::new(&cfg, opts) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(PrefclmRun { inner: r }));
                PrefclmStatus::Ok
            }
            Err(e) => fail(PrefclmStatus::Run, e.to_string()),
        }
    })
}

/// Steps the run until `env_steps` reaches `target` (capped at the config's limit).
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prefclm_run_advance(run: *mut PrefclmRun, target: u64) -> PrefclmStatus {
    guard(|| {
        if run.is_null() {
            return fail(PrefclmStatus::NullArgument, "run is null");
        }
        match (*run).inner.advance_to(target) {
            Ok(()) => PrefclmStatus::Ok,
            Err(e) => fail(PrefclmStatus::Run, e.to_string()),
        }
    })
}

/// Runs to the step limit and marks the run done.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prefclm_run_finish(run: *mut PrefclmRun) -> PrefclmStatus {
    guard(|| {
        if run.is_null() {
            return fail(PrefclmStatus::NullArgument, "run is null");
        }
        match (*run).inner.run_to_end() {
            Ok(_) => PrefclmStatus::Ok,
            Err(e) => fail(PrefclmStatus::Run, e.to_string()),
        }
    })
}

/// Refinement round with `feedback`; writes the new functions version.
///
/// # Safety
/// `run` live; `feedback` NUL-terminated; `version_out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn prefclm_run_refine(
    run: *mut PrefclmRun,
    feedback: *const c_char,
    version_out: *mut u64,
) -> PrefclmStatus {
    guard(|| {
        if run.is_null() {
            return fail(PrefclmStatus::NullArgument, "run is null");
        }
        let text = match str_arg(feedback, "feedback") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match (*run).inner.refine(text) {
            Ok(v) => {
                if !version_out.is_null() {
                    *version_out = v;
                }
                PrefclmStatus::Ok
            }
            Err(e) => fail(PrefclmStatus::Run, e.to_string()),
        }
    })
}

/// Current run state as JSON.
///
/// # Safety
/// `run` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn prefclm_run_state_json(run: *const PrefclmRun, out: *mut *mut c_char) -> PrefclmStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            return fail(PrefclmStatus::NullArgument, "run or out is null");
        }
        match serde_json::to_string(&(*run).inner.state()) {
            Ok(s) => put_string(out, s),
            Err(e) => fail(PrefclmStatus::Json, e.to_string()),
        }
    })
}

/// Learning curve so far as CSV.
///
/// # Safety
/// `run` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn prefclm_run_curve_csv(run: *const PrefclmRun, out: *mut *mut c_char) -> PrefclmStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            return fail(PrefclmStatus::NullArgument, "run or out is null");
        }
        put_string(out, curve_csv(&(*run).inner.state().curve))
    })
}

/// # Safety
/// `run` must be NULL or a handle from [`prefclm_run_new`].
#[no_mangle]
pub unsafe extern "C" fn prefclm_run_free(run: *mut PrefclmRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
