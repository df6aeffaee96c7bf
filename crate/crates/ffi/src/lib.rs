//! C interface to toposkms.
//!
//! Objects are opaque handles created by `tk_*_new`-style functions and released with the
//! matching `tk_*_free`. Every fallible call returns a [`TkStatus`]; on failure the message is
//! available from [`tk_last_error`] on the same thread. Strings returned to the caller are
//! freed with [`tk_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use toposkms::algebra::Context;
use toposkms::cli::{evaluate_json, InputError, Overrides};
use toposkms::kms_external::gibbs_state;
use toposkms::measure::State;
use toposkms::numerics::{ComplexMatrix, Projection, Tolerances};
use toposkms::presheaf::outer_daseinisation;
use toposkms::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidInput = 4,
    DimensionMismatch = 5,
    NumericalError = 6,
    /// The scenario ran and at least one check failed; the report is still returned.
    ChecksFailed = 7,
    Panic = 8,
}

/// A dense square complex matrix.
pub struct TkMatrix(ComplexMatrix);

/// A validated density matrix.
pub struct TkState(State);

/// A context: a partition of the identity into orthogonal projections.
pub struct TkContext(Context);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> TkStatus {
    match e {
        Error::DimMismatch { .. } => TkStatus::DimensionMismatch,
        Error::NoConvergence(_) | Error::Singular => TkStatus::NumericalError,
        _ => TkStatus::InvalidInput,
    }
}

fn fail(e: Error) -> TkStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn guarded(f: impl FnOnce() -> TkStatus) -> TkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            TkStatus::Panic
        }
    }
}

fn null() -> TkStatus {
    set_error("null pointer argument");
    TkStatus::NullPointer
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn tk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an n×n matrix from row-major real and (optionally null) imaginary parts.
///
/// # Safety
/// `re` (and `im` when non-null) must point to n*n doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tk_matrix_new(dim: usize, re: *const f64, im: *const f64, out: *mut *mut TkMatrix) -> TkStatus {
    guarded(|| {
        if re.is_null() || out.is_null() {
            return null();
        }
        if dim == 0 {
            set_error("dimension must be positive");
            return TkStatus::InvalidInput;
        }
        let n = dim * dim;
        let re = std::slice::from_raw_parts(re, n);
        let im = if im.is_null() { None } else { Some(std::slice::from_raw_parts(im, n)) };
        let m = ComplexMatrix::from_fn(dim, |i, j| Complex64::new(re[i * dim + j], im.map_or(0.0, |v| v[i * dim + j])));
        put(out, TkMatrix(m));
        TkStatus::Ok
    })
}

/// # Safety
/// `m` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tk_matrix_free(m: *mut TkMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn tk_matrix_dim(m: *const TkMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// # Safety
/// `m` must be a live matrix handle; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tk_matrix_get(m: *const TkMatrix, i: usize, j: usize, re: *mut f64, im: *mut f64) -> TkStatus {
    guarded(|| {
        let (Some(m), false, false) = (m.as_ref(), re.is_null(), im.is_null()) else {
            return null();
        };
        if i >= m.0.dim() || j >= m.0.dim() {
            set_error(format!("index ({i}, {j}) out of range"));
            return TkStatus::InvalidInput;
        }
        let z = m.0[(i, j)];
        *re = z.re;
        *im = z.im;
        TkStatus::Ok
    })
}

/// Validates a density matrix (Hermitian, unit trace, positive).
///
/// # Safety
/// `density` must be a live matrix handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tk_state_new(density: *const TkMatrix, out: *mut *mut TkState) -> TkStatus {
    guarded(|| {
        let (Some(d), false) = (density.as_ref(), out.is_null()) else {
            return null();
        };
        match State::new(d.0.clone(), &Tolerances::default()) {
            Ok(s) => {
                put(out, TkState(s));
                TkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// e^{-βH} / tr e^{-βH}.
///
/// # Safety
/// `h` must be a live matrix handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tk_state_gibbs(h: *const TkMatrix, beta: f64, out: *mut *mut TkState) -> TkStatus {
    guarded(|| {
        let (Some(h), false) = (h.as_ref(), out.is_null()) else {
            return null();
        };
        match gibbs_state(&h.0, beta, &Tolerances::default()) {
            Ok(s) => {
                put(out, TkState(s));
                TkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `s` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tk_state_free(s: *mut TkState) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// tr(ϱP) for a projection P.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tk_state_probability(s: *const TkState, p: *const TkMatrix, out: *mut f64) -> TkStatus {
    guarded(|| {
        let (Some(s), Some(p), false) = (s.as_ref(), p.as_ref(), out.is_null()) else {
            return null();
        };
        if p.0.dim() != s.0.dim() {
            return fail(Error::DimMismatch { expected: s.0.dim(), got: p.0.dim() });
        }
        match Projection::new(p.0.clone(), &Tolerances::default()) {
            Ok(p) => {
                *out = s.0.prob(&p);
                TkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// The maximal context of the standard basis.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tk_context_diagonal(dim: usize, out: *mut *mut TkContext) -> TkStatus {
    guarded(|| {
        if out.is_null() {
            return null();
        }
        match Context::diagonal(dim, &Tolerances::default()) {
            Ok(c) => {
                put(out, TkContext(c));
                TkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// The context {P, I - P}.
///
/// # Safety
/// `p` must be a live matrix handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tk_context_binary(p: *const TkMatrix, out: *mut *mut TkContext) -> TkStatus {
    guarded(|| {
        let (Some(p), false) = (p.as_ref(), out.is_null()) else {
            return null();
        };
        let tol = Tolerances::default();
        match Projection::new(p.0.clone(), &tol).and_then(|p| Context::binary(&p, &tol)) {
            Ok(c) => {
                put(out, TkContext(c));
                TkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `c` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tk_context_free(c: *mut TkContext) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Number of minimal projections (characters) of the context.
///
/// # Safety
/// `c` must be a live context handle.
#[no_mangle]
pub unsafe extern "C" fn tk_context_num_blocks(c: *const TkContext) -> usize {
    c.as_ref().map_or(0, |c| c.0.num_blocks())
}

/// Block `k` of the context in canonical order, as a new matrix.
///
/// # Safety
/// `c` must be a live context handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tk_context_block(c: *const TkContext, k: usize, out: *mut *mut TkMatrix) -> TkStatus {
    guarded(|| {
        let (Some(c), false) = (c.as_ref(), out.is_null()) else {
            return null();
        };
        match c.0.blocks().get(k) {
            Some(b) => {
                put(out, TkMatrix(b.matrix().clone()));
                TkStatus::Ok
            }
            None => {
                set_error(format!("block {k} out of range"));
                TkStatus::InvalidInput
            }
        }
    })
}

/// The smallest projection of the context dominating P.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tk_outer_daseinisation(p: *const TkMatrix, c: *const TkContext, out: *mut *mut TkMatrix) -> TkStatus {
    guarded(|| {
        let (Some(p), Some(c), false) = (p.as_ref(), c.as_ref(), out.is_null()) else {
            return null();
        };
        let tol = Tolerances::default();
        match Projection::new(p.0.clone(), &tol).and_then(|p| outer_daseinisation(&p, &c.0, &tol)) {
            Ok(d) => {
                put(out, TkMatrix(d.into_matrix()));
                TkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Runs a JSON scenario and returns the JSON report.
///
/// Returns `Ok` when every check passes and `ChecksFailed` when some fail; in both cases
/// `*report` receives the report, to be released with [`tk_string_free`]. Input errors leave
/// `*report` null.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string; `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tk_run_scenario(scenario_json: *const c_char, report: *mut *mut c_char) -> TkStatus {
    guarded(|| {
        if scenario_json.is_null() || report.is_null() {
            return null();
        }
        *report = ptr::null_mut();
        let Ok(text) = CStr::from_ptr(scenario_json).to_str() else {
            set_error("scenario is not valid UTF-8");
            return TkStatus::InvalidUtf8;
        };
        match evaluate_json(text, &Overrides::default(), None) {
            Ok(doc) => {
                let json = CString::new(doc.to_json()).expect("JSON has no NUL bytes");
                *report = json.into_raw();
                if doc.passed() {
                    TkStatus::Ok
                } else {
                    set_error(format!("{} check entries failed", doc.summary.failures));
                    TkStatus::ChecksFailed
                }
            }
            Err(e) => {
                set_error(e.to_string());
                match e {
                    InputError::Parse(_) => TkStatus::ParseError,
                    InputError::Invalid(e) => status_of(&e),
                    _ => TkStatus::InvalidInput,
                }
            }
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
