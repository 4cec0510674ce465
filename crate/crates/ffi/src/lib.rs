//! C ABI over `levelset`.
//!
//! Targets and surrogates are opaque handles created by `*_from_json` or
//! `*_named` and released with the matching `*_free`. Every call returns an
//! [`LsStatus`]; on failure the message is available from
//! [`ls_last_error_message`] until the next call on the same thread.
//! Strings returned through `out_json` are owned by the caller and released
//! with [`ls_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use levelset::calibration::{gap, GapConfig};
use levelset::cli::{exit_code, load_surrogate, load_target};
use levelset::construct1d::{boundary_certificate, construct};
use levelset::elicitation::{build_atlas, check_ie, check_strong_ie, ElicitationConfig};
use levelset::geometry::Distribution;
use levelset::links::{auto_link, Link};
use levelset::surrogates::{minimize, SurrogateSpec};
use levelset::{Error, OptimizerConfig, SurrogateLoss, TargetLoss};
use serde_json::json;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    /// A check found a violation; the output is still written.
    Violation = 1,
    InvalidInput = 2,
    RedundantReport = 3,
    NotOrderable = 4,
    NoConvergence = 5,
    Failure = 6,
    NullPointer = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LsClaim {
    Ie = 0,
    StrongIe = 1,
}

/// Opaque target loss.
pub struct LsTarget(TargetLoss);

/// Opaque surrogate loss.
pub struct LsSurrogate(Arc<dyn SurrogateLoss>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LsStatus {
    match exit_code(e) {
        2 => LsStatus::InvalidInput,
        3 => LsStatus::RedundantReport,
        4 => LsStatus::NotOrderable,
        5 => LsStatus::NoConvergence,
        _ => LsStatus::Failure,
    }
}

enum Fail {
    Core(Error),
    Status(LsStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail::Core(Error::from(e))
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(LsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<LsStatus, Fail>) -> LsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            LsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Status(LsStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_json(out: *mut *mut c_char, v: &serde_json::Value) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out_json"));
    }
    let c = CString::new(serde_json::to_string(v)?).expect("JSON has no NUL");
    *out = c.into_raw();
    Ok(())
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> Result<LsStatus, Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(LsStatus::Ok)
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call.
#[no_mangle]
pub extern "C" fn ls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ls_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `{"n", "k", "loss", "labels"}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_target_from_json(json: *const c_char, out: *mut *mut LsTarget) -> LsStatus {
    guard(|| {
        let t = TargetLoss::from_json_str(str_arg(json, "json")?)?;
        write_handle(out, LsTarget(t))
    })
}

/// Built-in target such as `ordinal:4`, `abstain:1/4` or `ce-l2`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_target_named(name: *const c_char, out: *mut *mut LsTarget) -> LsStatus {
    guard(|| {
        let t = load_target(str_arg(name, "name")?)?;
        write_handle(out, LsTarget(t))
    })
}

/// # Safety
/// `t` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ls_target_free(t: *mut LsTarget) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_target_dims(t: *const LsTarget, out_k: *mut usize, out_n: *mut usize) -> LsStatus {
    guard(|| {
        let t = &ref_arg(t, "target")?.0;
        if out_k.is_null() || out_n.is_null() {
            return Err(null("out_k/out_n"));
        }
        *out_k = t.reports();
        *out_n = t.outcomes();
        Ok(LsStatus::Ok)
    })
}

/// Optimal reports at `p` (length `n`), written to `out_reports` in
/// increasing order. `*out_len` receives the count even when the buffer is
/// too small.
///
/// # Safety
/// `p` must hold `n` doubles and `out_reports` `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn ls_target_gamma(
    t: *const LsTarget,
    p: *const f64,
    n: usize,
    tie_tol: f64,
    out_reports: *mut usize,
    cap: usize,
    out_len: *mut usize,
) -> LsStatus {
    guard(|| {
        let t = &ref_arg(t, "target")?.0;
        let p = Distribution::new(slice_arg(p, n, "p")?.to_vec())?;
        if p.len() != t.outcomes() {
            return Err(Error::InvalidInput("p has the wrong length".into()).into());
        }
        let g = t.gamma(&p, tie_tol);
        if out_len.is_null() {
            return Err(null("out_len"));
        }
        *out_len = g.len();
        if g.len() > cap {
            return Err(Fail::Status(LsStatus::BufferTooSmall, format!("need {} entries", g.len())));
        }
        if out_reports.is_null() {
            return Err(null("out_reports"));
        }
        std::slice::from_raw_parts_mut(out_reports, g.len()).copy_from_slice(&g);
        Ok(LsStatus::Ok)
    })
}

/// Orderability certificate as JSON.
///
/// # Safety
/// `t` must be valid; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_target_orderability_json(t: *const LsTarget, out_json: *mut *mut c_char) -> LsStatus {
    guard(|| {
        let t = &ref_arg(t, "target")?.0;
        write_json(out_json, &serde_json::to_value(t.orderability())?)?;
        Ok(LsStatus::Ok)
    })
}

/// Parses a surrogate description (`{"builtin": ...}` or
/// `{"piecewise_quadratic_1d": ...}`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_surrogate_from_json(json: *const c_char, out: *mut *mut LsSurrogate) -> LsStatus {
    guard(|| {
        let s = SurrogateSpec::from_json_str(str_arg(json, "json")?)?.build()?;
        write_handle(out, LsSurrogate(s))
    })
}

/// Built-in surrogate such as `ce`, `cusp` or `universal:4`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_surrogate_named(name: *const c_char, out: *mut *mut LsSurrogate) -> LsStatus {
    guard(|| {
        let s = load_surrogate(str_arg(name, "name")?)?;
        write_handle(out, LsSurrogate(s))
    })
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ls_surrogate_free(s: *mut LsSurrogate) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_surrogate_dims(s: *const LsSurrogate, out_d: *mut usize, out_n: *mut usize) -> LsStatus {
    guard(|| {
        let s = &ref_arg(s, "surrogate")?.0;
        if out_d.is_null() || out_n.is_null() {
            return Err(null("out_d/out_n"));
        }
        *out_d = s.dim();
        *out_n = s.outcomes();
        Ok(LsStatus::Ok)
    })
}

/// Minimizes `<p, L(u)>`. Writes a minimizer to `out_u` (length `d`), the
/// optimal value and whether the minimizer is unique.
///
/// # Safety
/// `p` must hold `n` doubles, `out_u` `d` doubles; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn ls_minimize(
    s: *const LsSurrogate,
    p: *const f64,
    n: usize,
    out_u: *mut f64,
    d: usize,
    out_value: *mut f64,
    out_unique: *mut bool,
) -> LsStatus {
    guard(|| {
        let s = &ref_arg(s, "surrogate")?.0;
        if d != s.dim() {
            return Err(Error::InvalidInput(format!("d = {d}, surrogate has d = {}", s.dim())).into());
        }
        let p = Distribution::new(slice_arg(p, n, "p")?.to_vec())?;
        let set = minimize(s.as_ref(), &p, &OptimizerConfig::default())?;
        if out_u.is_null() || out_value.is_null() || out_unique.is_null() {
            return Err(null("output"));
        }
        std::slice::from_raw_parts_mut(out_u, d).copy_from_slice(&set.representative);
        *out_value = set.opt_value;
        *out_unique = set.is_unique;
        Ok(LsStatus::Ok)
    })
}

/// IE or strong IE on a simplex grid of spacing `resolution`. Returns
/// `LS_STATUS_VIOLATION` with the certificate in `out_json` when violated.
///
/// # Safety
/// Handles must be valid; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_check(
    s: *const LsSurrogate,
    t: *const LsTarget,
    claim: LsClaim,
    resolution: f64,
    out_json: *mut *mut c_char,
) -> LsStatus {
    guard(|| {
        let s = &ref_arg(s, "surrogate")?.0;
        let t = &ref_arg(t, "target")?.0;
        if s.outcomes() != t.outcomes() {
            return Err(Error::InvalidInput("surrogate and target disagree on n".into()).into());
        }
        let cfg = ElicitationConfig {
            resolution,
            ..ElicitationConfig::default()
        };
        if !(resolution > 0.0 && resolution <= 1.0) {
            return Err(Error::InvalidInput("resolution must lie in (0, 1]".into()).into());
        }
        let atlas = build_atlas(s.as_ref(), t, &cfg)?;
        let v = match claim {
            LsClaim::Ie => check_ie(&atlas),
            LsClaim::StrongIe => check_strong_ie(&atlas),
        };
        write_json(out_json, &serde_json::to_value(&v)?)?;
        Ok(if v.violated() { LsStatus::Violation } else { LsStatus::Ok })
    })
}

/// Calibrated 1-d surrogate for an orderable target. `out_json` receives
/// `{"surrogate", "link", "enumeration", "beta", "certificates"}`; the
/// surrogate object can be passed to [`ls_surrogate_from_json`] and the link
/// to [`ls_calibration_gap`].
///
/// # Safety
/// `t` must be valid; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_construct_1d(t: *const LsTarget, out_json: *mut *mut c_char) -> LsStatus {
    guard(|| {
        let t = &ref_arg(t, "target")?.0;
        let c = construct(t)?;
        let certs = boundary_certificate(&c.surrogate, t, &c.enumeration)?;
        let spec = SurrogateSpec::PiecewiseQuadratic1d {
            piecewise_quadratic_1d: c.surrogate.clone(),
        };
        write_json(
            out_json,
            &json!({
                "surrogate": spec,
                "link": Link::Interval(c.link),
                "enumeration": c.enumeration,
                "beta": c.beta,
                "certificates": certs,
            }),
        )?;
        Ok(LsStatus::Ok)
    })
}

/// Calibration gap at `p`. `link_json` may be NULL to choose a link
/// automatically. Returns `LS_STATUS_VIOLATION` when the gap is within
/// tolerance of zero. `out_gap` is infinite when no wrongly-linked report
/// was found.
///
/// # Safety
/// Handles must be valid, `p` must hold `n` doubles; outputs writable.
/// `out_json` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ls_calibration_gap(
    s: *const LsSurrogate,
    t: *const LsTarget,
    link_json: *const c_char,
    p: *const f64,
    n: usize,
    out_gap: *mut f64,
    out_json: *mut *mut c_char,
) -> LsStatus {
    guard(|| {
        let s = &ref_arg(s, "surrogate")?.0;
        let t = &ref_arg(t, "target")?.0;
        if s.outcomes() != t.outcomes() {
            return Err(Error::InvalidInput("surrogate and target disagree on n".into()).into());
        }
        let link = if link_json.is_null() {
            auto_link(s, t, &ElicitationConfig::default())?
        } else {
            Link::from_json_str(str_arg(link_json, "link_json")?)?
        };
        let p = Distribution::new(slice_arg(p, n, "p")?.to_vec())?;
        let probe = gap(s.as_ref(), t, &link, &p, &GapConfig::default())?;
        if out_gap.is_null() {
            return Err(null("out_gap"));
        }
        *out_gap = probe.gap.unwrap_or(f64::INFINITY);
        if !out_json.is_null() {
            write_json(out_json, &serde_json::to_value(&probe)?)?;
        }
        Ok(if probe.violated { LsStatus::Violation } else { LsStatus::Ok })
    })
}
