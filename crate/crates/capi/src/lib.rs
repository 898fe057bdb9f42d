//! C interface to the coupled solver.
//!
//! Configs and results are opaque handles created and destroyed here; every
//! entry point reports a [`RompartStatus`] and leaves a message for
//! [`rompart_last_error_message`] on failure. The matching declarations live
//! in `include/rompart.h`, which is maintained by hand and kept honest by the
//! `header_matches_exports` test.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

use rompart::config::ExperimentConfig;
use rompart::fom::{restrict_to_subdomains, run_single_domain};
use rompart::ivr::{run_coupled, Formulation, FormulationTag};
use rompart::metrics::{error_series, ErrorNorm};
use rompart::pod::{build_composite_basis, CompositeBasis, DimSelect, GammaSelect};
use rompart::Error;

/// Outcome of a call. Zero is success; everything else names the failure
/// class, with detail available from [`rompart_last_error_message`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RompartStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    NumericError = 4,
    Unstable = 5,
    IoError = 6,
    Internal = 7,
}

/// Opaque experiment configuration.
pub struct RompartConfig(ExperimentConfig);

/// Opaque outcome of one coupled integration.
pub struct RompartResult {
    times: Vec<f64>,
    errors: Vec<f64>,
    cond: f64,
    spd: bool,
    max_residual: f64,
    multiplier_dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let owned = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = owned);
}

fn status_of(err: &Error) -> RompartStatus {
    match err {
        Error::Config(_) => RompartStatus::ConfigError,
        Error::Unstable { .. } => RompartStatus::Unstable,
        Error::Io(_) | Error::Format { .. } => RompartStatus::IoError,
        _ => RompartStatus::NumericError,
    }
}

fn fail(err: &Error) -> RompartStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Version of the library as a static C string.
#[no_mangle]
pub extern "C" fn rompart_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rompart_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Built-in desk-scale configuration. Free with [`rompart_config_free`].
#[no_mangle]
pub extern "C" fn rompart_config_desk() -> *mut RompartConfig {
    Box::into_raw(Box::new(RompartConfig(ExperimentConfig::desk())))
}

/// Built-in full-size configuration. Free with [`rompart_config_free`].
#[no_mangle]
pub extern "C" fn rompart_config_paper() -> *mut RompartConfig {
    Box::into_raw(Box::new(RompartConfig(ExperimentConfig::paper())))
}

/// Parses a TOML configuration. Returns null and sets the error message on
/// failure. Free with [`rompart_config_free`].
///
/// # Safety
///
/// `text` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn rompart_config_from_toml(text: *const c_char) -> *mut RompartConfig {
    if text.is_null() {
        set_error("config text is null");
        return std::ptr::null_mut();
    }
    let text = match CStr::from_ptr(text).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("config text is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    match ExperimentConfig::from_toml_str(text) {
        Ok(cfg) => Box::into_raw(Box::new(RompartConfig(cfg))),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Releases a configuration. Null is ignored.
///
/// # Safety
///
/// `cfg` must be null or a pointer obtained from a `rompart_config_*`
/// constructor that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn rompart_config_free(cfg: *mut RompartConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn simulate(
    cfg: &ExperimentConfig,
    tag: FormulationTag,
    d0: usize,
) -> rompart::Result<RompartResult> {
    let problem = cfg.problem();
    let bench = run_single_domain(&problem)?;
    let (s1, s2) = problem.subdomains()?;
    let norm = ErrorNorm::build(&s1, &s2);

    let form = match cfg.lm_side {
        Some(side) if tag.reduced_multiplier() => Formulation::with_lm_side(tag, side - 1)?,
        _ => Formulation::new(tag),
    };
    let reduced = tag.reduced_side(0) || tag.reduced_side(1);
    let bases: [Option<CompositeBasis>; 2] = if reduced {
        let snaps = restrict_to_subdomains(&bench.states, &s1, &s2);
        let interior = if d0 == 0 {
            DimSelect::Energy { delta: cfg.delta0 }
        } else {
            DimSelect::Explicit(d0)
        };
        let gamma = if d0 == 0 {
            GammaSelect::Energy {
                delta: cfg.delta_gamma(),
            }
        } else {
            GammaSelect::TwoThirdsRule
        };
        [
            Some(build_composite_basis(&snaps.0, interior, gamma)?),
            Some(build_composite_basis(&snaps.1, interior, gamma)?),
        ]
    } else {
        [None, None]
    };

    let res = run_coupled(&problem, form, [bases[0].as_ref(), bases[1].as_ref()])?;
    let errors = error_series(&res, &bench, &s1, &s2, &norm)?;
    Ok(RompartResult {
        times: res.times,
        errors,
        cond: res.cond_schur,
        spd: res.schur_spd,
        max_residual: res.max_residual,
        multiplier_dim: res.multiplier_dim,
    })
}

/// Integrates one coupled formulation against the benchmark held in `cfg`
/// and hands back an opaque result. `formulation` names the pairing
/// (`"FF-fLM"`, `"RR-rLM"`, `"RR-fLM"`, `"FR-fLM"`, `"FR-rLM"`); `d0` sets
/// the interior basis size per subdomain, with zero meaning the config's
/// energy criterion. Free the result with [`rompart_result_free`].
///
/// # Safety
///
/// `cfg` must be a live pointer from a `rompart_config_*` constructor,
/// `formulation` a valid NUL-terminated C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rompart_run(
    cfg: *const RompartConfig,
    formulation: *const c_char,
    d0: usize,
    out: *mut *mut RompartResult,
) -> RompartStatus {
    if cfg.is_null() || formulation.is_null() || out.is_null() {
        set_error("null argument");
        return RompartStatus::NullArgument;
    }
    let name = match CStr::from_ptr(formulation).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("formulation name is not valid UTF-8");
            return RompartStatus::InvalidArgument;
        }
    };
    let tag = match FormulationTag::from_str(name) {
        Ok(t) => t,
        Err(e) => {
            set_error(&e.to_string());
            return RompartStatus::InvalidArgument;
        }
    };
    let cfg = &(*cfg).0;
    match catch_unwind(AssertUnwindSafe(|| simulate(cfg, tag, d0))) {
        Ok(Ok(res)) => {
            *out = Box::into_raw(Box::new(res));
            RompartStatus::Ok
        }
        Ok(Err(e)) => fail(&e),
        Err(_) => {
            set_error("internal panic");
            RompartStatus::Internal
        }
    }
}

/// Number of stored sample times in a result.
///
/// # Safety
///
/// `res` must be a live pointer from [`rompart_run`].
#[no_mangle]
pub unsafe extern "C" fn rompart_result_len(res: *const RompartResult) -> usize {
    if res.is_null() {
        return 0;
    }
    (*res).times.len()
}

/// Borrowed pointer to the sample times, valid until the result is freed.
///
/// # Safety
///
/// `res` must be a live pointer from [`rompart_run`].
#[no_mangle]
pub unsafe extern "C" fn rompart_result_times(res: *const RompartResult) -> *const f64 {
    if res.is_null() {
        return std::ptr::null();
    }
    (*res).times.as_ptr()
}

/// Borrowed pointer to the relative error at each sample time, valid until
/// the result is freed.
///
/// # Safety
///
/// `res` must be a live pointer from [`rompart_run`].
#[no_mangle]
pub unsafe extern "C" fn rompart_result_errors(res: *const RompartResult) -> *const f64 {
    if res.is_null() {
        return std::ptr::null();
    }
    (*res).errors.as_ptr()
}

/// Largest relative error over the run.
///
/// # Safety
///
/// `res` must be a live pointer from [`rompart_run`].
#[no_mangle]
pub unsafe extern "C" fn rompart_result_max_error(res: *const RompartResult) -> f64 {
    if res.is_null() {
        return f64::NAN;
    }
    (*res).errors.iter().cloned().fold(f64::NAN, f64::max)
}

/// Condition number of the interface operator.
///
/// # Safety
///
/// `res` must be a live pointer from [`rompart_run`].
#[no_mangle]
pub unsafe extern "C" fn rompart_result_cond(res: *const RompartResult) -> f64 {
    if res.is_null() {
        return f64::NAN;
    }
    (*res).cond
}

/// Whether the interface operator admitted a Cholesky factorization.
///
/// # Safety
///
/// `res` must be a live pointer from [`rompart_run`].
#[no_mangle]
pub unsafe extern "C" fn rompart_result_spd(res: *const RompartResult) -> c_int {
    if res.is_null() {
        return 0;
    }
    (*res).spd as c_int
}

/// Largest per-step constraint residual over the run.
///
/// # Safety
///
/// `res` must be a live pointer from [`rompart_run`].
#[no_mangle]
pub unsafe extern "C" fn rompart_result_max_residual(res: *const RompartResult) -> f64 {
    if res.is_null() {
        return f64::NAN;
    }
    (*res).max_residual
}

/// Dimension of the multiplier space.
///
/// # Safety
///
/// `res` must be a live pointer from [`rompart_run`].
#[no_mangle]
pub unsafe extern "C" fn rompart_result_multiplier_dim(res: *const RompartResult) -> usize {
    if res.is_null() {
        return 0;
    }
    (*res).multiplier_dim
}

/// Releases a result. Null is ignored.
///
/// # Safety
///
/// `res` must be null or a pointer from [`rompart_run`] that has not been
/// freed yet.
#[no_mangle]
pub unsafe extern "C" fn rompart_result_free(res: *mut RompartResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Runs the numerical self checks. Returns the number of failed checks,
/// zero when everything passed, or -1 on an internal panic.
#[no_mangle]
pub extern "C" fn rompart_verify(seed: u64, trials: usize) -> c_int {
    match catch_unwind(|| rompart::verify::run_battery(seed, trials)) {
        Ok(results) => results.iter().filter(|r| !r.passed).count() as c_int,
        Err(_) => {
            set_error("internal panic");
            -1
        }
    }
}
