//! C interface to `flexcoord`.
//!
//! Objects cross the boundary as opaque heap handles that the caller frees
//! with the matching `*_free` function. Every fallible call returns an
//! [`FcStatus`]; the message of the most recent failure on the calling thread
//! is available from [`fc_last_error_message`]. Panics are caught and
//! reported as [`FcStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use flexcoord::coordination::{run, RunMode, RunResult, Scenario};
use flexcoord::io::{load_scenario, write_results};
use flexcoord::metrics::aggregation_error;
use flexcoord::model::{pte_ratio, EssParams, Timeseries};
use flexcoord::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Io = 3,
    Solver = 4,
    Infeasible = 5,
    /// The quantity is not defined for this input, e.g. the aggregation
    /// error of an all-zero request or a series from a scheme that did not run.
    Undefined = 6,
    Panic = 7,
}

pub const FC_MODE_MONOLITHIC: u32 = 0;
pub const FC_MODE_HIERARCHICAL: u32 = 1;
pub const FC_MODE_BOTH: u32 = 2;

pub const FC_SERIES_BASELINE: u32 = 0;
pub const FC_SERIES_MONOLITHIC: u32 = 1;
pub const FC_SERIES_PLANNED: u32 = 2;
pub const FC_SERIES_REALIZED: u32 = 3;

/// A loaded scenario.
pub struct FcScenario(Scenario);

/// The outcome of one run.
pub struct FcRunResult(RunResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

struct Failure(FcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => FcStatus::Io,
            Error::Solver(_) => FcStatus::Solver,
            Error::Infeasible(_) => FcStatus::Infeasible,
            Error::ZeroRequest => FcStatus::Undefined,
            _ => FcStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: FcStatus, message: impl Into<String>) -> Failure {
    Failure(status, message.into())
}

/// Runs `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FcStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            FcStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller passes either null or a pointer obtained from this
    // library that has not been freed.
    unsafe { p.as_ref() }.ok_or_else(|| fail(FcStatus::NullPointer, format!("{what} is null")))
}

fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(FcStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null and NUL-terminated per the C contract.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(FcStatus::InvalidInput, format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(FcStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: the caller guarantees `len` readable doubles at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(FcStatus::NullPointer, "output pointer is null"));
    }
    // SAFETY: non-null, and the caller guarantees it is writable.
    unsafe { out.write(value) };
    Ok(())
}

/// Loads a scenario file. On success `*out` owns a new handle.
#[no_mangle]
pub extern "C" fn fc_scenario_load(path: *const c_char, out: *mut *mut FcScenario) -> FcStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(FcStatus::NullPointer, "output pointer is null"));
        }
        let scenario = load_scenario(&path_arg(path, "path")?)?;
        write_out(out, Box::into_raw(Box::new(FcScenario(scenario))))
    })
}

/// Frees a scenario handle. Null is ignored.
#[no_mangle]
pub extern "C" fn fc_scenario_free(scenario: *mut FcScenario) {
    if !scenario.is_null() {
        // SAFETY: the handle came from `fc_scenario_load` and is freed once.
        drop(unsafe { Box::from_raw(scenario) });
    }
}

/// Number of units in the scenario, or 0 for null.
#[no_mangle]
pub extern "C" fn fc_scenario_n_units(scenario: *const FcScenario) -> usize {
    // SAFETY: see `non_null`.
    unsafe { scenario.as_ref() }.map_or(0, |s| s.0.units.len())
}

/// Runs the scenario in one of the `FC_MODE_*` modes.
#[no_mangle]
pub extern "C" fn fc_run(scenario: *const FcScenario, mode: u32, out: *mut *mut FcRunResult) -> FcStatus {
    guard(|| {
        let scenario = non_null(scenario, "scenario")?;
        if out.is_null() {
            return Err(fail(FcStatus::NullPointer, "output pointer is null"));
        }
        let mode = match mode {
            FC_MODE_MONOLITHIC => RunMode::Monolithic,
            FC_MODE_HIERARCHICAL => RunMode::Hierarchical,
            FC_MODE_BOTH => RunMode::Both,
            other => return Err(fail(FcStatus::InvalidInput, format!("unknown run mode {other}"))),
        };
        let result = run(&scenario.0, mode)?;
        write_out(out, Box::into_raw(Box::new(FcRunResult(result))))
    })
}

/// Frees a result handle. Null is ignored.
#[no_mangle]
pub extern "C" fn fc_result_free(result: *mut FcRunResult) {
    if !result.is_null() {
        // SAFETY: the handle came from `fc_run` and is freed once.
        drop(unsafe { Box::from_raw(result) });
    }
}

/// Number of time steps of the run, or 0 for null.
#[no_mangle]
pub extern "C" fn fc_result_n_steps(result: *const FcRunResult) -> usize {
    // SAFETY: see `non_null`.
    unsafe { result.as_ref() }.map_or(0, |r| r.0.ipf_baseline.len())
}

/// Copies one `FC_SERIES_*` interconnection power flow series into `out`,
/// which must hold exactly `fc_result_n_steps` values.
#[no_mangle]
pub extern "C" fn fc_result_ipf(result: *const FcRunResult, series: u32, out: *mut f64, len: usize) -> FcStatus {
    guard(|| {
        let r = &non_null(result, "result")?.0;
        let values: Option<&Timeseries> = match series {
            FC_SERIES_BASELINE => Some(&r.ipf_baseline),
            FC_SERIES_MONOLITHIC => r.monolithic.as_ref().map(|m| &m.ipf),
            FC_SERIES_PLANNED => r.hierarchical.as_ref().map(|h| &h.ipf_planned),
            FC_SERIES_REALIZED => r.hierarchical.as_ref().map(|h| &h.ipf_realized),
            other => return Err(fail(FcStatus::InvalidInput, format!("unknown series {other}"))),
        };
        let values = values.ok_or_else(|| fail(FcStatus::Undefined, "the run did not produce this series"))?;
        if len != values.len() {
            return Err(fail(
                FcStatus::InvalidInput,
                format!("buffer holds {len} values, series has {}", values.len()),
            ));
        }
        if out.is_null() {
            return Err(fail(FcStatus::NullPointer, "output buffer is null"));
        }
        // SAFETY: `out` is non-null and holds `len` writable doubles.
        unsafe { ptr::copy_nonoverlapping(values.values().as_ptr(), out, len) };
        Ok(())
    })
}

fn metric(result: *const FcRunResult, out: *mut f64, pick: impl Fn(&RunResult) -> Option<f64>) -> FcStatus {
    guard(|| {
        let r = &non_null(result, "result")?.0;
        let v = pick(r).ok_or_else(|| fail(FcStatus::Undefined, "metric is undefined for this run"))?;
        write_out(out, v)
    })
}

/// Root aggregation error of a hierarchical run.
#[no_mangle]
pub extern "C" fn fc_result_epsilon(result: *const FcRunResult, out: *mut f64) -> FcStatus {
    metric(result, out, |r| r.metrics.epsilon_agg)
}

/// Aggregation efficiency of a run with both schemes.
#[no_mangle]
pub extern "C" fn fc_result_eta(result: *const FcRunResult, out: *mut f64) -> FcStatus {
    metric(result, out, |r| r.metrics.eta_agg)
}

/// Writes the result files into `dir`, creating it if needed.
#[no_mangle]
pub extern "C" fn fc_result_write(
    scenario: *const FcScenario,
    result: *const FcRunResult,
    dir: *const c_char,
) -> FcStatus {
    guard(|| {
        let scenario = non_null(scenario, "scenario")?;
        let result = non_null(result, "result")?;
        write_results(&scenario.0, &result.0, &path_arg(dir, "directory")?)?;
        Ok(())
    })
}

/// Power-to-energy ratio of a unit with the given limits.
#[no_mangle]
pub extern "C" fn fc_pte_ratio(p_max_mw: f64, capacity_mwh: f64, out: *mut f64) -> FcStatus {
    guard(|| {
        let unit = EssParams::ideal("unit", p_max_mw, capacity_mwh, 0.5);
        unit.validate()?;
        write_out(out, pte_ratio(&unit))
    })
}

/// Normalised squared mismatch of two series of length `len`.
#[no_mangle]
pub extern "C" fn fc_aggregation_error(
    requested: *const f64,
    delivered: *const f64,
    len: usize,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        let req = Timeseries::new(slice_arg(requested, len, "requested")?.to_vec())?;
        let del = Timeseries::new(slice_arg(delivered, len, "delivered")?.to_vec())?;
        write_out(out, aggregation_error(&req, &del)?)
    })
}

/// Message of the last failure on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
