//! C ABI over the `scbicm` analysis routines.
//!
//! Channels and GEXIT curves are opaque handles created by `*_new` /
//! computing functions and released with the matching `*_free`. Every
//! fallible call returns a [`ScbicmStatus`]; on failure the message is kept
//! per thread and read with [`scbicm_last_error`]. Outputs are written only
//! on success. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use scbicm::channel::{ebn0_to_sigma, ChannelSpec, Fading};
use scbicm::constellation::{Constellation, Modulation};
use scbicm::de_coupled::{sc_bp_threshold, ScEnsemble, DEFAULT_SC_MAX_ITERS};
use scbicm::de_flat::{bp_threshold, DeSchedule, DemapperConfig};
use scbicm::demapper::DemapperKind;
use scbicm::density::DegreeProfile;
use scbicm::gexit::{area_threshold, bp_gexit_curve, CurveEnsemble, CurveOptions, GexitCurve};
use scbicm::gmi::{noise_threshold, RateMode};
use scbicm::rng::SeedStream;
use scbicm::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScbicmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InsufficientSamples = 3,
    NonConvergence = 4,
    Io = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScbicmModulation {
    Qpsk = 0,
    Qam16 = 1,
    Qam64 = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScbicmFading {
    Awgn = 0,
    Rayleigh = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScbicmDemapper {
    Map = 0,
    MaxLogMap = 1,
}

/// Opaque channel template (constellation and fading; the noise level is
/// chosen by each routine).
pub struct ScbicmChannel {
    spec: ChannelSpec,
}

/// Opaque BP-GEXIT curve.
pub struct ScbicmCurve {
    curve: GexitCurve,
    rate: f64,
    bits_per_symbol: usize,
}

/// Numerical budget shared by the density-evolution entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ScbicmDeOptions {
    /// A [`ScbicmDemapper`] code.
    pub demapper: u32,
    /// Monte-Carlo samples per demapper density; 0 selects the default.
    pub demapper_samples: usize,
    /// Demapper refresh period; 0 means non-iterative detection.
    pub id_period: usize,
    /// Iteration cap; 0 selects the default.
    pub max_iters: usize,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ScbicmStatus {
    match e {
        Error::Config(_) | Error::OutOfRange(_) | Error::GridMismatch => ScbicmStatus::InvalidArgument,
        Error::InsufficientSamples { .. } => ScbicmStatus::InsufficientSamples,
        Error::NonConvergence(_) => ScbicmStatus::NonConvergence,
        Error::Io(_) | Error::Json(_) => ScbicmStatus::Io,
    }
}

fn guard<F: FnOnce() -> Result<(), (ScbicmStatus, String)>>(f: F) -> ScbicmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScbicmStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            ScbicmStatus::Internal
        }
    }
}

fn lift<T>(r: scbicm::Result<T>) -> Result<T, (ScbicmStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (ScbicmStatus, String) {
    (ScbicmStatus::NullPointer, format!("{what} is NULL"))
}

fn bad(what: &str, code: u32) -> (ScbicmStatus, String) {
    (ScbicmStatus::InvalidArgument, format!("unknown {what} code {code}"))
}

fn kind_of(code: u32) -> Result<DemapperKind, (ScbicmStatus, String)> {
    match code {
        c if c == ScbicmDemapper::Map as u32 => Ok(DemapperKind::MapOptimal),
        c if c == ScbicmDemapper::MaxLogMap as u32 => Ok(DemapperKind::MaxLogMap),
        c => Err(bad("demapper", c)),
    }
}

fn de_config(o: &ScbicmDeOptions, default_iters: usize) -> Result<(DemapperConfig, DeSchedule), (ScbicmStatus, String)> {
    let mut d = DemapperConfig::new(kind_of(o.demapper)?, o.seed);
    if o.demapper_samples > 0 {
        d.n_samples = o.demapper_samples;
    }
    let s = if o.id_period > 0 { lift(DeSchedule::iterative(o.id_period))? } else { DeSchedule::non_iterative() };
    let s = s.with_max_iters(if o.max_iters > 0 { o.max_iters } else { default_iters });
    lift(s.validate())?;
    Ok((d, s))
}

/// Default options: MAP demapper, default budgets, seed 1.
#[no_mangle]
pub extern "C" fn scbicm_de_options_default() -> ScbicmDeOptions {
    ScbicmDeOptions { demapper: ScbicmDemapper::Map as u32, demapper_samples: 0, id_period: 0, max_iters: 0, seed: 1 }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn scbicm_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version"),
    };
    V.as_ptr()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn scbicm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a channel template from [`ScbicmModulation`] and [`ScbicmFading`]
/// codes.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn scbicm_channel_new(modulation: u32, fading: u32, out: *mut *mut ScbicmChannel) -> ScbicmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = match modulation {
            c if c == ScbicmModulation::Qpsk as u32 => Modulation::Qpsk,
            c if c == ScbicmModulation::Qam16 as u32 => Modulation::Qam16,
            c if c == ScbicmModulation::Qam64 as u32 => Modulation::Qam64,
            c => return Err(bad("modulation", c)),
        };
        let f = match fading {
            c if c == ScbicmFading::Awgn as u32 => Fading::None,
            c if c == ScbicmFading::Rayleigh as u32 => Fading::Rayleigh,
            c => return Err(bad("fading", c)),
        };
        let spec = lift(ChannelSpec::new(Constellation::new(m), f, 1.0))?;
        *out = Box::into_raw(Box::new(ScbicmChannel { spec }));
        Ok(())
    })
}

/// # Safety
/// `ch` must be NULL or a handle from [`scbicm_channel_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scbicm_channel_free(ch: *mut ScbicmChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// Bits per constellation symbol.
///
/// # Safety
/// `ch` must be a live channel handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scbicm_channel_bits(ch: *const ScbicmChannel, out: *mut usize) -> ScbicmStatus {
    guard(|| {
        let ch = ch.as_ref().ok_or_else(|| null("channel"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ch.spec.bits_per_symbol();
        Ok(())
    })
}

/// Noise standard deviation per real dimension for the given Eb/N0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scbicm_ebn0_to_sigma(ebn0_db: f64, rate: f64, bits_per_symbol: usize, out: *mut f64) -> ScbicmStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lift(ebn0_to_sigma(ebn0_db, rate, bits_per_symbol))?;
        Ok(())
    })
}

/// Smallest Eb/N0 (dB) at which the BICM GMI (or the coded-modulation
/// capacity when `coded_modulation` is set) reaches `rate`.
///
/// # Safety
/// `ch` must be a live channel handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn scbicm_noise_threshold(
    ch: *const ScbicmChannel,
    demapper: u32,
    rate: f64,
    coded_modulation: bool,
    samples: usize,
    seed: u64,
    out_ebn0_db: *mut f64,
    out_stderr_db: *mut f64,
) -> ScbicmStatus {
    guard(|| {
        let ch = ch.as_ref().ok_or_else(|| null("channel"))?;
        let ebn0 = out_ebn0_db.as_mut().ok_or_else(|| null("out_ebn0_db"))?;
        let mode = if coded_modulation { RateMode::Cm } else { RateMode::Gmi };
        let t = lift(noise_threshold(&ch.spec, kind_of(demapper)?, rate, mode, samples, &SeedStream::new(seed)))?;
        *ebn0 = t.ebn0_db;
        if let Some(s) = out_stderr_db.as_mut() {
            *s = t.stderr_db;
        }
        Ok(())
    })
}

/// BP threshold (Eb/N0 in dB) of the uncoupled `(dl, dr)` regular ensemble.
///
/// # Safety
/// `ch` must be a live channel handle; `opts` and `out_ebn0_db` must be valid.
#[no_mangle]
pub unsafe extern "C" fn scbicm_bp_threshold(
    ch: *const ScbicmChannel,
    dl: usize,
    dr: usize,
    opts: *const ScbicmDeOptions,
    out_ebn0_db: *mut f64,
) -> ScbicmStatus {
    guard(|| {
        let ch = ch.as_ref().ok_or_else(|| null("channel"))?;
        let opts = opts.as_ref().ok_or_else(|| null("opts"))?;
        let out = out_ebn0_db.as_mut().ok_or_else(|| null("out_ebn0_db"))?;
        let profile = lift(DegreeProfile::regular(dl, dr))?;
        let (d, s) = de_config(opts, scbicm::de_flat::DEFAULT_MAX_ITERS)?;
        *out = lift(bp_threshold(&profile, &ch.spec, &d, &s, (-2.0, 12.0)))?.ebn0_db;
        Ok(())
    })
}

/// BP threshold (Eb/N0 in dB, at the design rate) of the `(dl, dr, L, w)`
/// coupled ensemble.
///
/// # Safety
/// `ch` must be a live channel handle; `opts` and `out_ebn0_db` must be valid.
#[no_mangle]
pub unsafe extern "C" fn scbicm_sc_bp_threshold(
    ch: *const ScbicmChannel,
    dl: usize,
    dr: usize,
    l: usize,
    w: usize,
    opts: *const ScbicmDeOptions,
    out_ebn0_db: *mut f64,
) -> ScbicmStatus {
    guard(|| {
        let ch = ch.as_ref().ok_or_else(|| null("channel"))?;
        let opts = opts.as_ref().ok_or_else(|| null("opts"))?;
        let out = out_ebn0_db.as_mut().ok_or_else(|| null("out_ebn0_db"))?;
        let e = lift(ScEnsemble::new(dl, dr, l, w))?;
        let (d, s) = de_config(opts, DEFAULT_SC_MAX_ITERS)?;
        *out = lift(sc_bp_threshold(&e, &ch.spec, &d, &s, (-2.0, 12.0)))?.ebn0_db;
        Ok(())
    })
}

/// BP-GEXIT curve on `n_alpha` equally spaced channel entropies. `l == 0`
/// selects the uncoupled ensemble. `kernel_samples == 0` selects the default.
///
/// # Safety
/// `ch` must be a live channel handle; `opts` valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scbicm_gexit_curve(
    ch: *const ScbicmChannel,
    dl: usize,
    dr: usize,
    l: usize,
    w: usize,
    n_alpha: usize,
    kernel_samples: usize,
    opts: *const ScbicmDeOptions,
    out: *mut *mut ScbicmCurve,
) -> ScbicmStatus {
    guard(|| {
        let ch = ch.as_ref().ok_or_else(|| null("channel"))?;
        let opts = opts.as_ref().ok_or_else(|| null("opts"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if n_alpha == 0 {
            return Err((ScbicmStatus::InvalidArgument, "n_alpha must be positive".into()));
        }
        let profile = lift(DegreeProfile::regular(dl, dr))?;
        let (ens, iters) = if l == 0 {
            (CurveEnsemble::Flat(profile), scbicm::de_flat::DEFAULT_MAX_ITERS)
        } else {
            (CurveEnsemble::Coupled(lift(ScEnsemble::new(dl, dr, l, w))?), DEFAULT_SC_MAX_ITERS)
        };
        let (d, s) = de_config(opts, iters)?;
        let mut o = CurveOptions::uniform(n_alpha);
        if kernel_samples > 0 {
            o.kernel_samples = kernel_samples;
        }
        let curve = lift(bp_gexit_curve(&ens, &ch.spec, &d, &s, &o))?;
        *out = Box::into_raw(Box::new(ScbicmCurve { curve, rate: ens.design_rate(), bits_per_symbol: ch.spec.bits_per_symbol() }));
        Ok(())
    })
}

/// # Safety
/// `c` must be NULL or a handle from [`scbicm_gexit_curve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scbicm_curve_free(c: *mut ScbicmCurve) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Number of points of the curve.
///
/// # Safety
/// `c` must be a live curve handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scbicm_curve_len(c: *const ScbicmCurve, out: *mut usize) -> ScbicmStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("curve"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = c.curve.points.len();
        Ok(())
    })
}

/// Point `i` of the curve; `alpha` is increasing in `i`.
///
/// # Safety
/// `c` must be a live curve handle; output pointers writable (`stderr_out`
/// may be NULL).
#[no_mangle]
pub unsafe extern "C" fn scbicm_curve_point(
    c: *const ScbicmCurve,
    i: usize,
    alpha_out: *mut f64,
    g_out: *mut f64,
    stderr_out: *mut f64,
) -> ScbicmStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("curve"))?;
        let p = c.curve.points.get(i).ok_or_else(|| (ScbicmStatus::InvalidArgument, format!("index {i} out of range")))?;
        let a = alpha_out.as_mut().ok_or_else(|| null("alpha_out"))?;
        let g = g_out.as_mut().ok_or_else(|| null("g_out"))?;
        *a = p.alpha;
        *g = p.g;
        if let Some(s) = stderr_out.as_mut() {
            *s = p.stderr;
        }
        Ok(())
    })
}

/// Area threshold of the curve, as Eb/N0 in dB at the ensemble design rate.
///
/// # Safety
/// `c` must be a live curve handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scbicm_curve_area_threshold(c: *const ScbicmCurve, out_ebn0_db: *mut f64) -> ScbicmStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("curve"))?;
        let out = out_ebn0_db.as_mut().ok_or_else(|| null("out_ebn0_db"))?;
        *out = lift(area_threshold(&c.curve, c.rate, c.bits_per_symbol))?.ebn0_db;
        Ok(())
    })
}
