use std::ffi::CStr;
use std::ptr;

use scbicm_ffi::*;

fn channel(m: ScbicmModulation, f: ScbicmFading) -> *mut ScbicmChannel {
    let mut ch = ptr::null_mut();
    assert_eq!(unsafe { scbicm_channel_new(m as u32, f as u32, &mut ch) }, ScbicmStatus::Ok);
    assert!(!ch.is_null());
    ch
}

fn last_error() -> String {
    let p = scbicm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(scbicm_version()) };
    assert_eq!(v.to_str().unwrap(), scbicm::VERSION);
}

#[test]
fn channel_lifecycle() {
    for (m, bits) in [(ScbicmModulation::Qpsk, 2), (ScbicmModulation::Qam16, 4), (ScbicmModulation::Qam64, 6)] {
        let ch = channel(m, ScbicmFading::Rayleigh);
        let mut b = 0usize;
        assert_eq!(unsafe { scbicm_channel_bits(ch, &mut b) }, ScbicmStatus::Ok);
        assert_eq!(b, bits);
        unsafe { scbicm_channel_free(ch) };
    }
    unsafe { scbicm_channel_free(ptr::null_mut()) };
}

#[test]
fn bad_codes_and_nulls_are_reported() {
    let mut ch = ptr::null_mut();
    assert_eq!(unsafe { scbicm_channel_new(7, 0, &mut ch) }, ScbicmStatus::InvalidArgument);
    assert!(ch.is_null());
    assert!(last_error().contains("modulation"));
    assert_eq!(unsafe { scbicm_channel_new(0, 0, ptr::null_mut()) }, ScbicmStatus::NullPointer);
    let mut b = 0usize;
    assert_eq!(unsafe { scbicm_channel_bits(ptr::null(), &mut b) }, ScbicmStatus::NullPointer);

    let ch = channel(ScbicmModulation::Qpsk, ScbicmFading::Awgn);
    let mut x = 0.0;
    let st = unsafe { scbicm_noise_threshold(ch, 0, 1.5, false, 20_000, 1, &mut x, ptr::null_mut()) };
    assert_eq!(st, ScbicmStatus::InvalidArgument);
    let st = unsafe { scbicm_noise_threshold(ch, 0, 0.5, false, 10, 1, &mut x, ptr::null_mut()) };
    assert_eq!(st, ScbicmStatus::InsufficientSamples);
    let mut opts = scbicm_de_options_default();
    opts.demapper = 9;
    assert_eq!(unsafe { scbicm_bp_threshold(ch, 3, 6, &opts, &mut x) }, ScbicmStatus::InvalidArgument);
    assert!(last_error().contains("demapper"));
    unsafe { scbicm_channel_free(ch) };
}

#[test]
fn ebn0_conversion() {
    let mut s = 0.0;
    assert_eq!(unsafe { scbicm_ebn0_to_sigma(0.0, 0.5, 2, &mut s) }, ScbicmStatus::Ok);
    assert!((s - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { scbicm_ebn0_to_sigma(0.0, 0.0, 2, &mut s) }, ScbicmStatus::InvalidArgument);
}

#[test]
fn thresholds_match_the_library() {
    let ch = channel(ScbicmModulation::Qpsk, ScbicmFading::Awgn);
    let mut ebn0 = f64::NAN;
    let mut se = f64::NAN;
    let st = unsafe { scbicm_noise_threshold(ch, ScbicmDemapper::Map as u32, 0.5, false, 200_000, 3, &mut ebn0, &mut se) };
    assert_eq!(st, ScbicmStatus::Ok);
    // Binary-input AWGN Shannon limit at rate 1/2.
    assert!((ebn0 - 0.187).abs() < 4.0 * se + 0.02, "{ebn0} ± {se}");

    let mut opts = scbicm_de_options_default();
    opts.demapper_samples = 100_000;
    let mut bp = f64::NAN;
    assert_eq!(unsafe { scbicm_bp_threshold(ch, 3, 6, &opts, &mut bp) }, ScbicmStatus::Ok);
    assert!((bp - 1.11).abs() < 0.08, "{bp}");
    unsafe { scbicm_channel_free(ch) };
}

#[test]
fn curve_handle() {
    let ch = channel(ScbicmModulation::Qpsk, ScbicmFading::Awgn);
    let mut opts = scbicm_de_options_default();
    opts.demapper_samples = 50_000;
    let mut c = ptr::null_mut();
    let st = unsafe { scbicm_gexit_curve(ch, 3, 6, 0, 0, 8, 20_000, &opts, &mut c) };
    assert_eq!(st, ScbicmStatus::Ok, "{}", last_error());
    let mut n = 0usize;
    assert_eq!(unsafe { scbicm_curve_len(c, &mut n) }, ScbicmStatus::Ok);
    assert!(n >= 8);
    let mut prev = 0.0;
    for i in 0..n {
        let (mut a, mut g) = (0.0, 0.0);
        assert_eq!(unsafe { scbicm_curve_point(c, i, &mut a, &mut g, ptr::null_mut()) }, ScbicmStatus::Ok);
        assert!(a > prev && (-0.05..=1.05).contains(&g));
        prev = a;
    }
    assert_eq!(prev, 1.0);
    let (mut a, mut g) = (0.0, 0.0);
    assert_eq!(unsafe { scbicm_curve_point(c, n, &mut a, &mut g, ptr::null_mut()) }, ScbicmStatus::InvalidArgument);
    let mut area = f64::NAN;
    assert_eq!(unsafe { scbicm_curve_area_threshold(c, &mut area) }, ScbicmStatus::Ok);
    assert!(area > 0.2 && area < 0.9, "{area}");
    unsafe {
        scbicm_curve_free(c);
        scbicm_channel_free(ch);
    }
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/scbicm.h")).unwrap();
    for sym in [
        "scbicm_version",
        "scbicm_last_error",
        "scbicm_channel_new",
        "scbicm_channel_free",
        "scbicm_noise_threshold",
        "scbicm_bp_threshold",
        "scbicm_sc_bp_threshold",
        "scbicm_gexit_curve",
        "scbicm_curve_point",
        "scbicm_curve_free",
        "SCBICM_STATUS_NON_CONVERGENCE",
        "SCBICM_MODULATION_QAM64",
    ] {
        assert!(h.contains(sym), "{sym} missing from header");
    }
}
