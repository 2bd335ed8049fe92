//! C interface to `fblab`.
//!
//! Channels are opaque handles created by [`fblab_channel_new`] and released
//! with [`fblab_channel_free`]. Every fallible call returns an [`FblabStatus`];
//! on failure [`fblab_last_error`] describes the problem for the calling
//! thread. Strings returned through out-parameters are owned by the caller and
//! must be released with [`fblab_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fblab::channel::{ArithmeticMode, ChannelMode};
use fblab::report::Number;
use fblab::{bounds, dp, montecarlo, ChannelParams, Error, ProbabilityMode, StrategyRule};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FblabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    ExactChannelSampling = 4,
    ResourceCap = 5,
    CheckFailed = 6,
    Internal = 7,
    Panic = 8,
}

/// Opaque channel handle.
pub struct FblabChannel {
    inner: ChannelParams,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FblabSimStats {
    pub trials: u64,
    pub errors: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FblabStatus {
    match e {
        Error::ProbabilityOutOfRange(_) => FblabStatus::OutOfRange,
        Error::SamplingExactChannel => FblabStatus::ExactChannelSampling,
        Error::ResourceCap { .. } => FblabStatus::ResourceCap,
        Error::CheckFailed(_) => FblabStatus::CheckFailed,
        Error::Io(_) | Error::Json(_) => FblabStatus::Internal,
        _ => FblabStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (FblabStatus, String)>) -> FblabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FblabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FblabStatus::Panic
        }
    }
}

fn lift<T>(r: fblab::Result<T>) -> Result<T, (FblabStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (FblabStatus, String) {
    (FblabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn channel<'a>(ch: *const FblabChannel) -> Result<&'a ChannelParams, (FblabStatus, String)> {
    ch.as_ref().map(|c| &c.inner).ok_or_else(|| null("channel"))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), (FblabStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn arithmetic(ch: &ChannelParams) -> ArithmeticMode {
    if ch.is_exact() {
        ArithmeticMode::Rational
    } else {
        ArithmeticMode::LogFloat
    }
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fblab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fblab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a channel from a literal such as `"1/10"` or `"0.1"`. With
/// `exact != 0` all computations use rational arithmetic.
///
/// # Safety
/// `literal` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fblab_channel_new(literal: *const c_char, exact: i32, out: *mut *mut FblabChannel) -> FblabStatus {
    guard(|| {
        if literal.is_null() {
            return Err(null("literal"));
        }
        let text = CStr::from_ptr(literal)
            .to_str()
            .map_err(|_| (FblabStatus::InvalidArgument, "literal is not UTF-8".to_string()))?;
        let mode = if exact != 0 { ChannelMode::Rational } else { ChannelMode::Float };
        let inner = lift(ChannelParams::new(text, mode))?;
        write(out, Box::into_raw(Box::new(FblabChannel { inner })), "out")
    })
}

/// Releases a channel. Null is ignored.
///
/// # Safety
/// `ch` must come from [`fblab_channel_new`] and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fblab_channel_free(ch: *mut FblabChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// Crossover probability as a double; NaN for a null handle.
///
/// # Safety
/// `ch` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fblab_channel_p(ch: *const FblabChannel) -> f64 {
    ch.as_ref().map_or(f64::NAN, |c| c.inner.p())
}

/// `-ln(p^{1/3} q^{2/3} + p^{2/3} q^{1/3})`.
///
/// # Safety
/// `ch` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fblab_feedback_exponent(ch: *const FblabChannel, out: *mut f64) -> FblabStatus {
    guard(|| write(out, bounds::feedback_exponent(channel(ch)?), "out"))
}

/// Max-posterior error probability at horizon `n` and its natural log.
///
/// # Safety
/// `ch` must be a live handle; `pe` and `ln_pe` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fblab_forward_error(ch: *const FblabChannel, n: usize, pe: *mut f64, ln_pe: *mut f64) -> FblabStatus {
    guard(|| {
        let ch = channel(ch)?;
        let r = lift(dp::forward_error_prob(n, ch, &StrategyRule::max_posterior(), arithmetic(ch)))?;
        write(pe, r.pe.to_f64(), "pe")?;
        write(ln_pe, r.ln_pe, "ln_pe")
    })
}

/// Exact max-posterior error probability as decimal numerator and denominator.
/// Requires an exact channel.
///
/// # Safety
/// `ch` must be a live handle; `num` and `den` valid pointers. The strings must
/// be released with [`fblab_string_free`].
#[no_mangle]
pub unsafe extern "C" fn fblab_forward_error_exact(
    ch: *const FblabChannel,
    n: usize,
    num: *mut *mut c_char,
    den: *mut *mut c_char,
) -> FblabStatus {
    guard(|| {
        let ch = channel(ch)?;
        if !ch.is_exact() {
            return Err((FblabStatus::InvalidArgument, "exact error needs an exact channel".into()));
        }
        if num.is_null() || den.is_null() {
            return Err(null("num/den"));
        }
        let r = lift(dp::forward_error_prob(n, ch, &StrategyRule::max_posterior(), ArithmeticMode::Rational))?;
        let Number::Exact(v) = r.pe else {
            return Err((FblabStatus::Internal, "rational run returned a float".into()));
        };
        write(num, to_c_string(v.numer().to_string()), "num")?;
        write(den, to_c_string(v.denom().to_string()), "den")
    })
}

/// Optimal error probability over all metric-state strategies.
///
/// # Safety
/// `ch` must be a live handle and `pe` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fblab_bellman_error(ch: *const FblabChannel, n: usize, pe: *mut f64) -> FblabStatus {
    guard(|| {
        let ch = channel(ch)?;
        let (v, _) = lift(dp::bellman_optimum(n, ch, arithmetic(ch), ProbabilityMode::Bayes))?;
        write(pe, v.to_f64(), "pe")
    })
}

/// Upper and lower error bounds at horizon `n`.
///
/// # Safety
/// `ch` must be a live handle; `upper` and `lower` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fblab_bounds(ch: *const FblabChannel, n: usize, upper: *mut f64, lower: *mut f64) -> FblabStatus {
    guard(|| {
        let ch = channel(ch)?;
        write(upper, bounds::berlekamp_upper(n, ch).value, "upper")?;
        write(lower, bounds::theorem1_lower(n, ch).theorem1.value, "lower")
    })
}

/// Monte Carlo estimate of the max-posterior error. Needs a float channel.
///
/// # Safety
/// `ch` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fblab_simulate(
    ch: *const FblabChannel,
    n: usize,
    trials: u64,
    seed: u64,
    workers: usize,
    out: *mut FblabSimStats,
) -> FblabStatus {
    guard(|| {
        let ch = channel(ch)?;
        let s = lift(montecarlo::run_trials(n, ch, &StrategyRule::max_posterior(), trials, seed, workers.max(1)))?;
        let stats =
            FblabSimStats { trials: s.trials, errors: s.errors, estimate: s.estimate, ci_low: s.ci_low, ci_high: s.ci_high };
        write(out, stats, "out")
    })
}

/// The bounds report as a JSON document; `n < 0` omits the horizon terms.
///
/// # Safety
/// `ch` must be a live handle and `out` a valid pointer. Release the string
/// with [`fblab_string_free`].
#[no_mangle]
pub unsafe extern "C" fn fblab_bounds_report_json(ch: *const FblabChannel, n: i64, out: *mut *mut c_char) -> FblabStatus {
    guard(|| {
        let ch = channel(ch)?;
        let n = usize::try_from(n).ok();
        let report = lift(bounds::bound_report(ch, n))?;
        let text = serde_json::to_string(&report).map_err(|e| (FblabStatus::Internal, e.to_string()))?;
        write(out, to_c_string(text), "out")
    })
}
