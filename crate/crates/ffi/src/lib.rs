//! C ABI for the sfree library.
//!
//! Expressions and estimator pairs are passed around as opaque handles that
//! the caller releases with the matching `*_free` function. Every fallible
//! function returns an [`SfreeStatus`]; on failure a message is available
//! from [`sfree_last_error_message`] on the same thread. Strings returned
//! through `char **` outputs are owned by the caller and released with
//! [`sfree_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use sfree::bounds::Bounds;
use sfree::cutgen::{intersection_cut, Cut, CutError, RaySystem, StepOptions};
use sfree::estimators::{estimate, EstimatorError, EstimatorPair};
use sfree::expr::{parse, Expr, ExprError};
use sfree::lp::Instance;
use sfree::monoidal::{monoidal_cut, MonoidalConfig, MonoidalError};
use sfree::pipeline::{report_status, run_pipeline, PipelineOptions};
use sfree::strengthen::{build_hhat, strengthened_cut, HhatOptions, StrengthenError};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfreeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    DimensionMismatch = 4,
    EvaluationError = 5,
    EstimatorError = 6,
    CutError = 7,
    LpError = 8,
    InvalidArgument = 9,
    Panic = 10,
}

/// Parsed expression.
pub struct SfreeExpr {
    expr: Expr,
    dim: usize,
}

/// Concave underestimator and convex overestimator tight at a base point.
pub struct SfreeEstimator {
    pair: EstimatorPair,
    dim: usize,
}

/// Switches for [`sfree_pipeline_json`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SfreePipelineOptions {
    pub bounds: bool,
    pub monoidal: bool,
    /// 1-based index of the integer variable to strengthen, 0 for all.
    pub k: usize,
    pub sos1: bool,
    pub tuy: bool,
    pub timing: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Fail(SfreeStatus, String);

impl Fail {
    fn new(status: SfreeStatus, msg: impl ToString) -> Fail {
        Fail(status, msg.to_string())
    }
}

impl From<ExprError> for Fail {
    fn from(e: ExprError) -> Fail {
        let status = match e {
            ExprError::Syntax { .. } | ExprError::UnknownFunction { .. } | ExprError::VarOutOfRange { .. } => SfreeStatus::ParseError,
            ExprError::DimensionMismatch { .. } => SfreeStatus::DimensionMismatch,
            _ => SfreeStatus::EvaluationError,
        };
        Fail::new(status, e)
    }
}

impl From<EstimatorError> for Fail {
    fn from(e: EstimatorError) -> Fail {
        Fail::new(SfreeStatus::EstimatorError, e)
    }
}

impl From<CutError> for Fail {
    fn from(e: CutError) -> Fail {
        Fail::new(SfreeStatus::CutError, e)
    }
}

impl From<StrengthenError> for Fail {
    fn from(e: StrengthenError) -> Fail {
        Fail::new(SfreeStatus::CutError, e)
    }
}

impl From<MonoidalError> for Fail {
    fn from(e: MonoidalError) -> Fail {
        Fail::new(SfreeStatus::CutError, e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SfreeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfreeStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SfreeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::new(SfreeStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::new(SfreeStatus::InvalidUtf8, "string is not UTF-8"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::new(SfreeStatus::NullPointer, "null array"));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::new(SfreeStatus::NullPointer, "null handle"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::new(SfreeStatus::NullPointer, "null output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s.replace('\0', " ")).expect("nul bytes removed");
    write_out(out, c.into_raw())
}

unsafe fn write_coeffs(out: *mut f64, cut: &Cut) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::new(SfreeStatus::NullPointer, "null coefficient buffer"));
    }
    ptr::copy_nonoverlapping(cut.coeffs.as_ptr(), out, cut.coeffs.len());
    Ok(())
}

/// Message of the last failure on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn sfree_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sfree_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sfree_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `text` over `dim` variables named `x1..xn`.
///
/// # Safety
/// `text` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sfree_expr_parse(text: *const c_char, dim: usize, out: *mut *mut SfreeExpr) -> SfreeStatus {
    guard(|| {
        let e = parse(str_arg(text)?, dim)?;
        write_out(out, Box::into_raw(Box::new(SfreeExpr { expr: e, dim })))
    })
}

/// Evaluates `e` at `x` (length `len`).
///
/// # Safety
/// Pointers must be valid; `x` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sfree_expr_eval(e: *const SfreeExpr, x: *const f64, len: usize, out: *mut f64) -> SfreeStatus {
    guard(|| {
        let e = ref_arg(e)?;
        let v = e.expr.eval(slice_arg(x, len)?)?;
        write_out(out, v)
    })
}

/// Printed form of `e`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sfree_expr_to_string(e: *const SfreeExpr, out: *mut *mut c_char) -> SfreeStatus {
    guard(|| write_string(out, ref_arg(e)?.expr.to_text()))
}

/// Number of variables `e` was parsed with.
///
/// # Safety
/// `e` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn sfree_expr_dim(e: *const SfreeExpr) -> usize {
    e.as_ref().map_or(0, |e| e.dim)
}

/// Releases an expression handle.
///
/// # Safety
/// `e` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sfree_expr_free(e: *mut SfreeExpr) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Estimator pair of `e` tight at `at` (length must equal the expression's dimension).
///
/// # Safety
/// Pointers must be valid; `at` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sfree_estimate(e: *const SfreeExpr, at: *const f64, len: usize, out: *mut *mut SfreeEstimator) -> SfreeStatus {
    guard(|| {
        let e = ref_arg(e)?;
        if len != e.dim {
            return Err(Fail::new(SfreeStatus::DimensionMismatch, format!("expected {} coordinates, got {len}", e.dim)));
        }
        let pair = estimate(&e.expr, slice_arg(at, len)?)?;
        write_out(out, Box::into_raw(Box::new(SfreeEstimator { pair, dim: e.dim })))
    })
}

/// Values of the underestimator and overestimator at `x`.
///
/// # Safety
/// Pointers must be valid; `x` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sfree_estimator_eval(
    est: *const SfreeEstimator,
    x: *const f64,
    len: usize,
    under: *mut f64,
    over: *mut f64,
) -> SfreeStatus {
    guard(|| {
        let est = ref_arg(est)?;
        let x = slice_arg(x, len)?;
        let (u, o) = (est.pair.under.eval(x)?, est.pair.over.eval(x)?);
        write_out(under, u)?;
        write_out(over, o)
    })
}

/// New expression handle holding the underestimator.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sfree_estimator_under(est: *const SfreeEstimator, out: *mut *mut SfreeExpr) -> SfreeStatus {
    guard(|| {
        let est = ref_arg(est)?;
        write_out(out, Box::into_raw(Box::new(SfreeExpr { expr: est.pair.under.clone(), dim: est.dim })))
    })
}

/// Printed underestimator and overestimator.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sfree_estimator_strings(
    est: *const SfreeEstimator,
    under: *mut *mut c_char,
    over: *mut *mut c_char,
) -> SfreeStatus {
    guard(|| {
        let est = ref_arg(est)?;
        if under.is_null() || over.is_null() {
            return Err(Fail::new(SfreeStatus::NullPointer, "null output pointer"));
        }
        write_string(under, est.pair.under.to_text())?;
        write_string(over, est.pair.over.to_text())
    })
}

/// Releases an estimator handle.
///
/// # Safety
/// `est` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sfree_estimator_free(est: *mut SfreeEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Intersection cut `Σ coeffs_j (x_j − apex_j) ≥ 1` of `{h_ave ≥ 0}` along axis rays.
///
/// # Safety
/// `apex` and `coeffs` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn sfree_intersection_cut(h_ave: *const SfreeExpr, apex: *const f64, n: usize, coeffs: *mut f64) -> SfreeStatus {
    guard(|| {
        let h = ref_arg(h_ave)?;
        let cut = intersection_cut(&h.expr, &RaySystem::axis(slice_arg(apex, n)?), &StepOptions::default())?;
        write_coeffs(coeffs, &cut)
    })
}

/// Intersection cut of the set enlarged with the box `[lower, upper]`.
///
/// # Safety
/// `apex`, `lower`, `upper` and `coeffs` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn sfree_strengthened_cut(
    h_ave: *const SfreeExpr,
    apex: *const f64,
    lower: *const f64,
    upper: *const f64,
    n: usize,
    grid: usize,
    tuy: bool,
    safety: f64,
    coeffs: *mut f64,
) -> SfreeStatus {
    guard(|| {
        let h = ref_arg(h_ave)?;
        let apex = slice_arg(apex, n)?;
        let bounds = Bounds::new(slice_arg(lower, n)?.to_vec(), slice_arg(upper, n)?.to_vec())
            .map_err(|e| Fail::new(SfreeStatus::InvalidArgument, e))?;
        let opts = HhatOptions { grid_per_dim: if grid == 0 { 64 } else { grid }, tuy, ..Default::default() };
        let ev = build_hhat(&h.expr, &bounds, apex, &opts)?;
        let cut = strengthened_cut(&ev, &RaySystem::axis(apex), safety, &StepOptions::default())?;
        write_coeffs(coeffs, &cut)
    })
}

/// Monoidal cut for the 1-based integer index `k` over `[0, upper]`.
///
/// # Safety
/// `upper` and `coeffs` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn sfree_monoidal_cut(
    h_ave: *const SfreeExpr,
    upper: *const f64,
    n: usize,
    k: usize,
    directions: usize,
    coeffs: *mut f64,
) -> SfreeStatus {
    guard(|| {
        let h = ref_arg(h_ave)?;
        if k == 0 || k > n {
            return Err(Fail::new(SfreeStatus::InvalidArgument, format!("k = {k} out of range 1..={n}")));
        }
        let bounds = Bounds::from_upper(slice_arg(upper, n)?.to_vec()).map_err(|e| Fail::new(SfreeStatus::InvalidArgument, e))?;
        let cfg = MonoidalConfig { directions: (directions > 0).then_some(directions), integer: vec![k - 1], ..Default::default() };
        let cuts = monoidal_cut(&h.expr, &bounds, &cfg)?;
        write_coeffs(coeffs, &cuts[0])
    })
}

/// Runs the separation pipeline on instance JSON and returns the report JSON.
///
/// `exit_code` receives the CLI status: 0 with cuts, 4 when no constraint is
/// violated, 5 when a violated constraint produced no cut.
///
/// # Safety
/// Pointers must be valid; `opts` may be null for defaults.
#[no_mangle]
pub unsafe extern "C" fn sfree_pipeline_json(
    instance_json: *const c_char,
    opts: *const SfreePipelineOptions,
    report: *mut *mut c_char,
    exit_code: *mut i32,
) -> SfreeStatus {
    guard(|| {
        let inst = Instance::from_json(str_arg(instance_json)?).map_err(|e| Fail::new(SfreeStatus::ParseError, e))?;
        let mut po = PipelineOptions { timing: false, ..Default::default() };
        if let Some(o) = opts.as_ref() {
            po.bounds = o.bounds;
            po.monoidal = o.monoidal;
            po.k = (o.k > 0).then_some(o.k);
            po.sos1 = o.sos1;
            po.tuy = o.tuy;
            po.timing = o.timing;
        }
        let rep = run_pipeline(&inst, &po).map_err(|e| Fail::new(SfreeStatus::LpError, e))?;
        write_out(exit_code, report_status(&rep))?;
        write_string(report, rep.to_json())
    })
}
