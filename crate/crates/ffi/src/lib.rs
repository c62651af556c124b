//! C ABI over the `ajd` library.
//!
//! Models live behind an opaque [`AjdModel`] handle. Every fallible call
//! returns an [`AjdStatus`]; on failure a message is kept per thread and can
//! be read with [`ajd_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ajd::limits::{closed_form_cov, closed_form_mean};
use ajd::riccati::char_fn;
use ajd::simulate::simulate_skeleton;
use ajd::stability::{classify, transience_rate_1d, DEFAULT_MOMENT_ORDER};
use ajd::{AjdError, ModelSpec};
use num_complex::Complex64;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AjdStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed input: dimensions, arguments, states or JSON.
    InvalidInput = 2,
    NotAdmissible = 3,
    /// Numerical failure (unstable matrix, transform domain, thinning).
    Numeric = 4,
    /// A precondition on the model class was not met.
    Gate = 5,
    BufferTooSmall = 6,
    Panic = 99,
}

/// Opaque model handle.
pub struct AjdModel {
    spec: ModelSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &AjdError) -> AjdStatus {
    match e {
        AjdError::NotAdmissible(_) => AjdStatus::NotAdmissible,
        AjdError::Gate(_) => AjdStatus::Gate,
        e if e.is_validation() => AjdStatus::InvalidInput,
        _ => AjdStatus::Numeric,
    }
}

struct Failure(AjdStatus, String);

impl From<AjdError> for Failure {
    fn from(e: AjdError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AjdStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> AjdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AjdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            AjdStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn output<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `m` must be null or a live handle from [`ajd_model_from_json`].
unsafe fn model<'a>(m: *const AjdModel) -> Result<&'a ModelSpec, Failure> {
    m.as_ref().map(|m| &m.spec).ok_or_else(|| null("model"))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got == want {
        Ok(())
    } else {
        Err(Failure(AjdStatus::InvalidInput, format!("{what} has length {got}, expected {want}")))
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ajd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ajd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a JSON spec document into a new handle written to `*out`.
/// The spec only has to be well formed; admissibility is checked by the
/// calls that need it.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ajd_model_from_json(json: *const c_char, out: *mut *mut AjdModel) -> AjdStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Failure(AjdStatus::InvalidInput, "json is not valid UTF-8".into()))?;
        let spec = ModelSpec::from_json(text)?;
        *out = Box::into_raw(Box::new(AjdModel { spec }));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn ajd_model_free(model: *mut AjdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// State dimension `d` and number of volatility factors `m`.
///
/// # Safety
/// `model` must be a live handle; `d` and `m` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ajd_model_dim(model: *const AjdModel, d: *mut usize, m: *mut usize) -> AjdStatus {
    guard(|| {
        let spec = self::model(model)?;
        if d.is_null() || m.is_null() {
            return Err(null("output"));
        }
        *d = spec.d;
        *m = spec.m;
        Ok(())
    })
}

/// JSON with the validation report and, for admissible specs, the stability
/// report. Free the string with [`ajd_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ajd_model_check_json(model: *const AjdModel, out: *mut *mut c_char) -> AjdStatus {
    guard(|| {
        let spec = self::model(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let validation = spec.validate()?;
        let stability = if validation.admissible { Some(classify(spec, DEFAULT_MOMENT_ORDER)?) } else { None };
        let doc = serde_json::json!({
            "schema_version": ajd::limits::SCHEMA_VERSION,
            "validation": validation,
            "stability": stability,
        });
        let text = CString::new(doc.to_string()).map_err(|e| Failure(AjdStatus::Numeric, e.to_string()))?;
        *out = text.into_raw();
        Ok(())
    })
}

/// Frees a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn ajd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `E[exp(uᵀX(t)) | X(0) = x]` for complex `u = u_re + i·u_im`.
///
/// # Safety
/// `x`, `u_re`, `u_im` must hold `d` values; `out_re`, `out_im` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ajd_char_fn(
    model: *const AjdModel,
    x: *const f64,
    u_re: *const f64,
    u_im: *const f64,
    d: usize,
    t: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> AjdStatus {
    guard(|| {
        let spec = self::model(model)?;
        check_len(d, spec.d, "state")?;
        let x = input(x, d, "x")?;
        let re = input(u_re, d, "u_re")?;
        let im = input(u_im, d, "u_im")?;
        let u: Vec<Complex64> = re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let v = char_fn(spec, x, t, &u)?;
        *output(out_re, 1, "out_re")?.first_mut().expect("length 1") = v.re;
        *output(out_im, 1, "out_im")?.first_mut().expect("length 1") = v.im;
        Ok(())
    })
}

/// Closed-form stationary mean, written to `out[0..d]`.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ajd_stationary_mean(model: *const AjdModel, out: *mut f64, len: usize) -> AjdStatus {
    guard(|| {
        let spec = self::model(model)?;
        check_len(len, spec.d, "out")?;
        let v = closed_form_mean(spec)?;
        output(out, len, "out")?.copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// Closed-form long-run covariance of the identity time average, row-major
/// into `out[0..d*d]`.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ajd_stationary_cov(model: *const AjdModel, out: *mut f64, len: usize) -> AjdStatus {
    guard(|| {
        let spec = self::model(model)?;
        check_len(len, spec.d * spec.d, "out")?;
        let c = closed_form_cov(spec)?;
        let dst = output(out, len, "out")?;
        for i in 0..spec.d {
            for j in 0..spec.d {
                dst[i * spec.d + j] = c[(i, j)];
            }
        }
        Ok(())
    })
}

/// Simulates `X(0), X(Δ), …, X(nΔ)` into `out` (row-major, `(n+1)·d`
/// values). Results depend only on the arguments, not on threading.
///
/// # Safety
/// `x0` must hold `d` values and `out` be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ajd_simulate_skeleton(
    model: *const AjdModel,
    x0: *const f64,
    d: usize,
    delta: f64,
    n: usize,
    dt: f64,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> AjdStatus {
    guard(|| {
        let spec = self::model(model)?;
        check_len(d, spec.d, "x0")?;
        let want = (n + 1) * spec.d;
        if len < want {
            return Err(Failure(AjdStatus::BufferTooSmall, format!("output holds {len} values, need {want}")));
        }
        let x0 = input(x0, d, "x0")?;
        let sk = simulate_skeleton(spec, x0, delta, n, dt, seed)?;
        output(out, want, "out")?.copy_from_slice(&sk.states);
        Ok(())
    })
}

/// Transience rate `h(ε)` of a 1-D model with one volatility factor.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ajd_transience_rate(model: *const AjdModel, eps: f64, out: *mut f64) -> AjdStatus {
    guard(|| {
        let spec = self::model(model)?;
        let h = transience_rate_1d(spec, eps)?;
        *output(out, 1, "out")?.first_mut().expect("length 1") = h;
        Ok(())
    })
}
