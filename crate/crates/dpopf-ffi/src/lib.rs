//! C ABI over the dpopf library: opaque handles, integer error codes and a
//! thread-local last-error message. All pointers returned by this module
//! must be released with the matching `_free` function.

use dpopf::admm::{AdmmConfig, AdmmRun};
use dpopf::case::{
    build_zone_views, parse_case_json, parse_partition_json, NetworkCase, ZonePartition,
};
use dpopf::harness::{run_algorithm, Algorithm};
use dpopf::opf::solve_centralized;
use dpopf::privacy::{PrivacyParams, SensitivityMode};
use dpopf::qp::QpTolerances;
use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::ptr;

/// Status codes returned by fallible functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpopfStatus {
    Ok = 0,
    InvalidArgument = 1,
    ParseError = 2,
    SolverError = 3,
}

/// Algorithm selector for `dpopf_run_admm`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpopfAlgorithm {
    Admm = 0,
    SpAdmm = 1,
    DpAdmm = 2,
}

/// Opaque network case handle.
pub struct DpopfCase {
    inner: NetworkCase,
}

/// Opaque handle over a finished distributed run.
pub struct DpopfRun {
    inner: AdmmRun,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dpopf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        set_error("null string argument");
        return None;
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Some(s),
        Err(_) => {
            set_error("string argument is not valid UTF-8");
            None
        }
    }
}

/// Parse a case from its JSON representation; null on failure.
///
/// # Safety
/// `json` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn dpopf_case_from_json(json: *const c_char) -> *mut DpopfCase {
    let Some(text) = read_utf8(json) else {
        return ptr::null_mut();
    };
    match parse_case_json(text) {
        Ok(inner) => Box::into_raw(Box::new(DpopfCase { inner })),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `case` must come from `dpopf_case_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dpopf_case_free(case: *mut DpopfCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// # Safety
/// `case` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpopf_case_num_buses(case: *const DpopfCase) -> c_int {
    case.as_ref().map_or(-1, |c| c.inner.num_buses() as c_int)
}

/// # Safety
/// `case` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpopf_case_num_lines(case: *const DpopfCase) -> c_int {
    case.as_ref().map_or(-1, |c| c.inner.lines.len() as c_int)
}

/// # Safety
/// `case` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpopf_case_num_gens(case: *const DpopfCase) -> c_int {
    case.as_ref().map_or(-1, |c| c.inner.gens.len() as c_int)
}

/// Solve the centralized OPF and write the optimal cost to `cost_out`.
///
/// # Safety
/// `case` must be a live handle and `cost_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpopf_solve_centralized(
    case: *const DpopfCase,
    cost_out: *mut c_double,
) -> DpopfStatus {
    let Some(case) = case.as_ref() else {
        set_error("null case handle");
        return DpopfStatus::InvalidArgument;
    };
    if cost_out.is_null() {
        set_error("null cost_out pointer");
        return DpopfStatus::InvalidArgument;
    }
    match solve_centralized(&case.inner, &QpTolerances::default()) {
        Ok(sol) => {
            *cost_out = sol.cost;
            DpopfStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            DpopfStatus::SolverError
        }
    }
}

/// Run a distributed algorithm over the zones given as partition JSON
/// (`{"zones": {...}}`); pass null for a single all-covering zone.
/// Returns null on failure.
///
/// # Safety
/// `case` must be a live handle; `zones_json` must be null or a valid
/// NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn dpopf_run_admm(
    case: *const DpopfCase,
    zones_json: *const c_char,
    algorithm: DpopfAlgorithm,
    rho: c_double,
    max_iters: c_int,
    tol: c_double,
    epsilon: c_double,
    alpha: c_double,
    seed: u64,
) -> *mut DpopfRun {
    let Some(case) = case.as_ref() else {
        set_error("null case handle");
        return ptr::null_mut();
    };
    if max_iters <= 0 {
        set_error("max_iters must be positive");
        return ptr::null_mut();
    }
    let partition = if zones_json.is_null() {
        ZonePartition::single_zone(&case.inner, "all")
    } else {
        let Some(text) = read_utf8(zones_json) else {
            return ptr::null_mut();
        };
        match parse_partition_json(text) {
            Ok(p) => p,
            Err(e) => {
                set_error(&e.to_string());
                return ptr::null_mut();
            }
        }
    };
    let zones = match build_zone_views(&case.inner, &partition) {
        Ok(z) => z,
        Err(e) => {
            set_error(&e.to_string());
            return ptr::null_mut();
        }
    };
    let algo = match algorithm {
        DpopfAlgorithm::Admm => Algorithm::Admm,
        DpopfAlgorithm::SpAdmm => Algorithm::SpAdmm,
        DpopfAlgorithm::DpAdmm => Algorithm::DpAdmm,
    };
    let cfg = AdmmConfig {
        rho,
        max_iters: max_iters as usize,
        tol,
        ..AdmmConfig::default()
    };
    let privacy = PrivacyParams {
        epsilon,
        alpha_frac: alpha,
        sensitivity_mode: match algo {
            Algorithm::SpAdmm => SensitivityMode::LocalMaxOverRun,
            _ => SensitivityMode::LocalPerIteration,
        },
        ..PrivacyParams::default()
    };
    match run_algorithm(&case.inner, &zones, algo, &cfg, &privacy, seed) {
        Ok(inner) => Box::into_raw(Box::new(DpopfRun { inner })),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `run` must come from `dpopf_run_admm` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dpopf_run_free(run: *mut DpopfRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpopf_run_iterations(run: *const DpopfRun) -> c_int {
    run.as_ref().map_or(-1, |r| r.inner.iterations_run() as c_int)
}

/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpopf_run_converged(run: *const DpopfRun) -> c_int {
    run.as_ref().map_or(-1, |r| c_int::from(r.inner.converged))
}

/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpopf_run_final_cost(run: *const DpopfRun) -> c_double {
    run.as_ref().map_or(f64::NAN, |r| r.inner.final_cost)
}

/// Primal residual of iteration `iter` (zero-based); NaN when out of range.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpopf_run_residual(run: *const DpopfRun, iter: c_int) -> c_double {
    let Some(run) = run.as_ref() else {
        return f64::NAN;
    };
    if iter < 0 {
        return f64::NAN;
    }
    run.inner
        .iterations
        .get(iter as usize)
        .map_or(f64::NAN, |r| r.residual)
}
