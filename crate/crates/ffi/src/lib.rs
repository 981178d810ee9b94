//! C ABI for `coherence-mi`.
//!
//! Samples and feature configurations live behind opaque handles created by
//! `*_new` functions and released by the matching `*_free`. Every fallible
//! call returns a [`CmiStatus`]; on failure a message is available from
//! [`cmi_last_error_message`] on the same thread. Estimates are written
//! through out-pointers together with an optional warning bitmask.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coherence_mi::analog::{self, FeatureConfig, Method, RealPairedSamples};
use coherence_mi::discrete::{self, DiscretePairedSamples};
use coherence_mi::{szego, Error, Estimate, Warning};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    LengthMismatch = 3,
    NonFinite = 4,
    TooFewSamples = 5,
    SymbolOutOfRange = 6,
    InvalidMass = 7,
    Internal = 99,
}

/// Some symbols never occur in the stream.
pub const CMI_WARN_UNSEEN_SYMBOLS: u32 = 1;
/// Fewer samples than feature dimensions.
pub const CMI_WARN_FEW_SAMPLES: u32 = 2;
/// The autocorrelation matrices are badly conditioned.
pub const CMI_WARN_ILL_CONDITIONED: u32 = 4;
/// Approximate eigenvalues were clipped (fast estimator).
pub const CMI_WARN_CLIPPED_BINS: u32 = 8;

/// Paired real-valued samples.
pub struct CmiRealSamples(RealPairedSamples);

/// Paired symbol streams.
pub struct CmiSymbolSamples(DiscretePairedSamples);

/// Feature-map parameters of the analog estimators.
pub struct CmiFeatureConfig(FeatureConfig);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CmiStatus {
    match e {
        Error::LengthMismatch { .. } => CmiStatus::LengthMismatch,
        Error::NonFinite(_) => CmiStatus::NonFinite,
        Error::TooFewSamples { .. } => CmiStatus::TooFewSamples,
        Error::SymbolOutOfRange { .. } => CmiStatus::SymbolOutOfRange,
        Error::InvalidMass(_) | Error::ZeroMarginal { .. } | Error::SupportMismatch { .. } => CmiStatus::InvalidMass,
        Error::InvalidParameter(_) | Error::RankDeficientCodebook(_) => CmiStatus::InvalidParameter,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CmiStatus, String)>) -> CmiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CmiStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CmiStatus::Internal
        }
    }
}

fn lift(e: Error) -> (CmiStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CmiStatus, String) {
    (CmiStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (CmiStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CmiStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), (CmiStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn warning_bits(w: &[Warning]) -> u32 {
    w.iter().fold(0, |bits, w| {
        bits | match w {
            Warning::UnseenSymbols { .. } => CMI_WARN_UNSEEN_SYMBOLS,
            Warning::FewSamples { .. } => CMI_WARN_FEW_SAMPLES,
            Warning::IllConditioned { .. } => CMI_WARN_ILL_CONDITIONED,
            Warning::ClippedBins { .. } => CMI_WARN_CLIPPED_BINS,
        }
    })
}

unsafe fn write_estimate(r: coherence_mi::Result<Estimate>, value: *mut f64, warnings: *mut u32) -> Result<(), (CmiStatus, String)> {
    if value.is_null() {
        return Err(null("value"));
    }
    let e = r.map_err(lift)?;
    *value = e.value;
    if !warnings.is_null() {
        *warnings = warning_bits(&e.warnings);
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cmi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cmi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `len` pairs into a new sample handle.
///
/// # Safety
/// `x` and `y` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmi_real_samples_new(x: *const f64, y: *const f64, len: usize, out: *mut *mut CmiRealSamples) -> CmiStatus {
    guard(|| {
        let (x, y) = (slice(x, len, "x")?, slice(y, len, "y")?);
        let s = RealPairedSamples::new(x.to_vec(), y.to_vec()).map_err(lift)?;
        emit(out, CmiRealSamples(s))
    })
}

/// # Safety
/// `s` must be null or a handle from [`cmi_real_samples_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cmi_real_samples_free(s: *mut CmiRealSamples) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Copies `len` symbol pairs with alphabets `0..x_alphabet` and `0..y_alphabet`.
///
/// # Safety
/// `x` and `y` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmi_symbol_samples_new(
    x: *const u32,
    y: *const u32,
    len: usize,
    x_alphabet: usize,
    y_alphabet: usize,
    out: *mut *mut CmiSymbolSamples,
) -> CmiStatus {
    guard(|| {
        let (x, y) = (slice(x, len, "x")?, slice(y, len, "y")?);
        let widen = |v: &[u32]| v.iter().map(|&a| a as usize).collect();
        let s = DiscretePairedSamples::new(widen(x), widen(y), x_alphabet, y_alphabet).map_err(lift)?;
        emit(out, CmiSymbolSamples(s))
    })
}

/// # Safety
/// `s` must be null or a handle from [`cmi_symbol_samples_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cmi_symbol_samples_free(s: *mut CmiSymbolSamples) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Configuration with the default alpha and the dimension rule for `sigma2`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmi_config_from_sigma2(sigma2: f64, out: *mut *mut CmiFeatureConfig) -> CmiStatus {
    guard(|| emit(out, CmiFeatureConfig(FeatureConfig::from_sigma2(sigma2).map_err(lift)?)))
}

/// Configuration with every parameter explicit; `dim` must be odd and >= 3.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmi_config_new(sigma2: f64, alpha: f64, dim: usize, out: *mut *mut CmiFeatureConfig) -> CmiStatus {
    guard(|| emit(out, CmiFeatureConfig(FeatureConfig::new(sigma2, alpha, dim).map_err(lift)?)))
}

/// Configuration with `sigma2 = p * samples^(-2/5)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmi_config_silverman(p: f64, samples: usize, out: *mut *mut CmiFeatureConfig) -> CmiStatus {
    guard(|| emit(out, CmiFeatureConfig(FeatureConfig::silverman(p, samples).map_err(lift)?)))
}

/// Turns standardization of the inputs on or off (on by default).
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn cmi_config_set_standardize(cfg: *mut CmiFeatureConfig, standardize: bool) -> CmiStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        c.0 = c.0.clone().with_standardize(standardize);
        Ok(())
    })
}

/// Feature dimension N, or 0 for a null handle.
///
/// # Safety
/// `cfg` must be null or a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn cmi_config_dim(cfg: *const CmiFeatureConfig) -> usize {
    cfg.as_ref().map_or(0, |c| c.0.dim)
}

/// Smoothing variance, or NaN for a null handle.
///
/// # Safety
/// `cfg` must be null or a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn cmi_config_sigma2(cfg: *const CmiFeatureConfig) -> f64 {
    cfg.as_ref().map_or(f64::NAN, |c| c.0.sigma2)
}

/// # Safety
/// `cfg` must be null or a configuration handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cmi_config_free(cfg: *mut CmiFeatureConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Analog SMI with exact whitening. `warnings` may be null.
///
/// # Safety
/// Handles must be live; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmi_smi_analog(
    s: *const CmiRealSamples,
    cfg: *const CmiFeatureConfig,
    value: *mut f64,
    warnings: *mut u32,
) -> CmiStatus {
    guard(|| {
        let (s, c) = (handle(s, "samples")?, handle(cfg, "cfg")?);
        write_estimate(analog::smi_analog(&s.0, &c.0), value, warnings)
    })
}

/// Fourier-diagonal approximation of the analog SMI. `warnings` may be null.
///
/// # Safety
/// Handles must be live; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmi_smi_analog_fast(
    s: *const CmiRealSamples,
    cfg: *const CmiFeatureConfig,
    value: *mut f64,
    warnings: *mut u32,
) -> CmiStatus {
    guard(|| {
        let (s, c) = (handle(s, "samples")?, handle(cfg, "cfg")?);
        write_estimate(szego::smi_analog_fast(&s.0, &c.0), value, warnings)
    })
}

/// Analog SMI minus the estimate on `y` circularly shifted by `shift`
/// (0 selects L/2). `fast` selects the Fourier-diagonal path.
///
/// # Safety
/// Handles must be live; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmi_smi_bias_reduced(
    s: *const CmiRealSamples,
    cfg: *const CmiFeatureConfig,
    shift: usize,
    fast: bool,
    value: *mut f64,
    warnings: *mut u32,
) -> CmiStatus {
    guard(|| {
        let (s, c) = (handle(s, "samples")?, handle(cfg, "cfg")?);
        let shift = if shift == 0 { analog::default_shift(s.0.len()) } else { shift };
        let method = if fast { Method::Fast } else { Method::Exact };
        write_estimate(analog::smi_bias_reduced_with(&s.0, &c.0, shift, method), value, warnings)
    })
}

/// Plug-in SMI of a symbol stream.
///
/// # Safety
/// `s` must be live; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmi_smi_discrete(s: *const CmiSymbolSamples, value: *mut f64, warnings: *mut u32) -> CmiStatus {
    guard(|| write_estimate(discrete::smi_plugin_simplex(&handle(s, "samples")?.0), value, warnings))
}

/// Plug-in HGR maximal correlation of a symbol stream.
///
/// # Safety
/// `s` must be live; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmi_hgr_discrete(s: *const CmiSymbolSamples, value: *mut f64, warnings: *mut u32) -> CmiStatus {
    guard(|| write_estimate(discrete::hgr_plugin(&handle(s, "samples")?.0), value, warnings))
}
