//! C ABI for `skorohod-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_from_json`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`SkorohodStatus`]; on failure a message is available from
//! [`skorohod_last_error`] on the same thread until the next failing call.
//! Strings returned by the library stay owned by the handle they came from.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use skorohod_core::config::RunConfig;
use skorohod_core::geometry::{Domain, DomainSpec};
use skorohod_core::montecarlo::{ExperimentReport, Verdict};
use skorohod_core::paths::{Interpolation, SamplePath};
use skorohod_core::rsde::{euler_reflected, CoefficientSpec, Coefficients};
use skorohod_core::skorohod::{solve, SkorohodSolution};
use skorohod_core::{Error, ErrorClass};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkorohodStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Invalid configuration, parameters or inputs.
    Config = 3,
    TubeTooNarrow = 4,
    Numeric = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// Outcome of an experiment.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkorohodVerdict {
    Pass = 0,
    Fail = 1,
    Degenerate = 2,
    NearCritical = 3,
    PremiseNotMet = 4,
}

impl From<Verdict> for SkorohodVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => SkorohodVerdict::Pass,
            Verdict::Fail => SkorohodVerdict::Fail,
            Verdict::Degenerate => SkorohodVerdict::Degenerate,
            Verdict::NearCritical => SkorohodVerdict::NearCritical,
            Verdict::PremiseNotMet => SkorohodVerdict::PremiseNotMet,
        }
    }
}

/// Opaque domain handle.
pub struct SkorohodDomain(Domain);

/// Opaque coefficient handle.
pub struct SkorohodCoefficients(Coefficients);

/// Opaque experiment report handle.
pub struct SkorohodReport {
    report: ExperimentReport,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SkorohodStatus {
    match e.class() {
        ErrorClass::Config => SkorohodStatus::Config,
        ErrorClass::TubeTooNarrow => SkorohodStatus::TubeTooNarrow,
        ErrorClass::Numeric => SkorohodStatus::Numeric,
    }
}

struct Failure(SkorohodStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SkorohodStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SkorohodStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SkorohodStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SkorohodStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SkorohodStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize) -> Option<&'a mut [f64]> {
    (!p.is_null()).then(|| std::slice::from_raw_parts_mut(p, len))
}

fn config_failure(message: String) -> Failure {
    Failure(SkorohodStatus::Config, message)
}

/// Message of the last failure on this thread (empty if none). The pointer
/// is valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn skorohod_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn skorohod_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a domain from the JSON form of a `[domain]` section, e.g.
/// `{"kind": "ball", "params": {"center": [0, 0], "radius": 1}}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skorohod_domain_from_json(json: *const c_char, out: *mut *mut SkorohodDomain) -> SkorohodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec: DomainSpec = serde_json::from_str(text(json, "json")?).map_err(|e| config_failure(e.to_string()))?;
        let domain = spec.build()?;
        *out = Box::into_raw(Box::new(SkorohodDomain(domain)));
        Ok(())
    })
}

/// # Safety
/// `domain` must come from [`skorohod_domain_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn skorohod_domain_free(domain: *mut SkorohodDomain) {
    if !domain.is_null() {
        drop(Box::from_raw(domain));
    }
}

/// Ambient dimension, or 0 for a null handle.
///
/// # Safety
/// `domain` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skorohod_domain_dim(domain: *const SkorohodDomain) -> usize {
    domain.as_ref().map_or(0, |d| d.0.dim())
}

/// Nearest point of the closed domain to `y`, written to `out`; both hold
/// `dim` entries.
///
/// # Safety
/// `domain` must be a live handle; `y` and `out` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn skorohod_domain_project(
    domain: *const SkorohodDomain,
    y: *const f64,
    dim: usize,
    out: *mut f64,
) -> SkorohodStatus {
    guard(|| {
        let d = &domain.as_ref().ok_or_else(|| null("domain"))?.0;
        let y = slice(y, dim, "y")?;
        let out = slice_mut(out, dim).ok_or_else(|| null("out"))?;
        let p = d.project(y)?;
        out.copy_from_slice(&p.point);
        Ok(())
    })
}

/// Builds coefficients from the JSON form of a `[coefficients]` section,
/// e.g. `{"sigma": "sin", "base": 0.5, "slope": 0.25}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skorohod_coefficients_from_json(
    json: *const c_char,
    out: *mut *mut SkorohodCoefficients,
) -> SkorohodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec: CoefficientSpec =
            serde_json::from_str(text(json, "json")?).map_err(|e| config_failure(e.to_string()))?;
        *out = Box::into_raw(Box::new(SkorohodCoefficients(spec.build()?)));
        Ok(())
    })
}

/// # Safety
/// `coeffs` must come from [`skorohod_coefficients_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn skorohod_coefficients_free(coeffs: *mut SkorohodCoefficients) {
    if !coeffs.is_null() {
        drop(Box::from_raw(coeffs));
    }
}

fn write_solution(sol: &SkorohodSolution, x: Option<&mut [f64]>, k: Option<&mut [f64]>, tv: Option<&mut [f64]>) {
    if let Some(x) = x {
        x.copy_from_slice(sol.x.values());
    }
    if let Some(k) = k {
        k.copy_from_slice(sol.k.values());
    }
    if let Some(tv) = tv {
        tv.copy_from_slice(&sol.tv);
    }
}

/// Skorohod map of a piecewise-linear driver with `nodes` nodes at `times`
/// and row-major `values` (`nodes × dim`). Writes the constrained path and
/// regulator (`nodes × dim` each) and the cumulative total variation
/// (`nodes`); any output pointer may be null.
///
/// # Safety
/// Inputs must hold the stated number of doubles; non-null outputs too.
#[no_mangle]
pub unsafe extern "C" fn skorohod_solve(
    domain: *const SkorohodDomain,
    times: *const f64,
    values: *const f64,
    nodes: usize,
    x0: *const f64,
    x_out: *mut f64,
    k_out: *mut f64,
    tv_out: *mut f64,
) -> SkorohodStatus {
    guard(|| {
        let d = &domain.as_ref().ok_or_else(|| null("domain"))?.0;
        let dim = d.dim();
        let driver = SamplePath::new(
            slice(times, nodes, "times")?.to_vec(),
            slice(values, nodes * dim, "values")?.to_vec(),
            dim,
            Interpolation::PiecewiseLinear,
        )?;
        let sol = solve(d, &driver, slice(x0, dim, "x0")?)?;
        write_solution(
            &sol,
            slice_mut(x_out, nodes * dim),
            slice_mut(k_out, nodes * dim),
            slice_mut(tv_out, nodes),
        );
        Ok(())
    })
}

/// Projected Euler scheme driven by a Brownian sample with `nodes` nodes and
/// row-major `values` (`nodes × d1`). Outputs as in [`skorohod_solve`] with
/// `d` columns.
///
/// # Safety
/// Inputs must hold the stated number of doubles; non-null outputs too.
#[no_mangle]
pub unsafe extern "C" fn skorohod_euler_reflected(
    domain: *const SkorohodDomain,
    coeffs: *const SkorohodCoefficients,
    times: *const f64,
    values: *const f64,
    nodes: usize,
    x0: *const f64,
    x_out: *mut f64,
    k_out: *mut f64,
    tv_out: *mut f64,
) -> SkorohodStatus {
    guard(|| {
        let d = &domain.as_ref().ok_or_else(|| null("domain"))?.0;
        let c = &coeffs.as_ref().ok_or_else(|| null("coeffs"))?.0;
        let w = SamplePath::new(
            slice(times, nodes, "times")?.to_vec(),
            slice(values, nodes * c.d1, "values")?.to_vec(),
            c.d1,
            Interpolation::PiecewiseLinear,
        )?;
        let sol = euler_reflected(d, c, &w, slice(x0, c.d, "x0")?)?;
        write_solution(
            &sol,
            slice_mut(x_out, nodes * c.d),
            slice_mut(k_out, nodes * c.d),
            slice_mut(tv_out, nodes),
        );
        Ok(())
    })
}

/// Runs the experiment described by a TOML configuration on `workers`
/// threads (0 means one per core). The report is returned even when its
/// verdict is a failure.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skorohod_run_config(
    config_toml: *const c_char,
    workers: usize,
    out: *mut *mut SkorohodReport,
) -> SkorohodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let resolved = RunConfig::parse(text(config_toml, "config_toml")?, &[])?.resolve()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Failure(SkorohodStatus::Numeric, e.to_string()))?;
        let run = pool.install(|| resolved.run())?;
        let json = CString::new(run.report.to_json()).map_err(|e| Failure(SkorohodStatus::Numeric, e.to_string()))?;
        *out = Box::into_raw(Box::new(SkorohodReport {
            report: run.report,
            json,
        }));
        Ok(())
    })
}

/// The report as JSON; owned by the handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skorohod_report_json(report: *const SkorohodReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn skorohod_report_verdict(report: *const SkorohodReport) -> SkorohodVerdict {
    report
        .as_ref()
        .map_or(SkorohodVerdict::Fail, |r| r.report.verdict.into())
}

/// # Safety
/// `report` must come from [`skorohod_run_config`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn skorohod_report_free(report: *mut SkorohodReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
