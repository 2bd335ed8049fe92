use std::ffi::{CStr, CString};
use std::ptr;

use fblab_ffi::*;

fn channel(lit: &str, exact: bool) -> *mut FblabChannel {
    let lit = CString::new(lit).unwrap();
    let mut ch = ptr::null_mut();
    let st = unsafe { fblab_channel_new(lit.as_ptr(), i32::from(exact), &mut ch) };
    assert_eq!(st, FblabStatus::Ok);
    assert!(!ch.is_null());
    ch
}

fn last_error() -> String {
    let p = fblab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn exact_one_step_error() {
    let ch = channel("1/10", true);
    let (mut num, mut den) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(fblab_forward_error_exact(ch, 1, &mut num, &mut den), FblabStatus::Ok);
        assert_eq!(CStr::from_ptr(num).to_str().unwrap(), "2");
        assert_eq!(CStr::from_ptr(den).to_str().unwrap(), "5");
        fblab_string_free(num);
        fblab_string_free(den);
        let (mut pe, mut ln) = (0.0, 0.0);
        assert_eq!(fblab_forward_error(ch, 1, &mut pe, &mut ln), FblabStatus::Ok);
        assert_eq!(pe, 0.4);
        let mut opt = 0.0;
        assert_eq!(fblab_bellman_error(ch, 2, &mut opt), FblabStatus::Ok);
        assert!((opt - 0.16).abs() < 1e-15);
        fblab_channel_free(ch);
    }
}

#[test]
fn bounds_and_exponent() {
    let ch = channel("0.1", false);
    unsafe {
        assert_eq!(fblab_channel_p(ch), 0.1);
        let mut f = 0.0;
        assert_eq!(fblab_feedback_exponent(ch, &mut f), FblabStatus::Ok);
        assert!((f - 0.4452200887).abs() < 1e-9);
        let (mut up, mut lo) = (0.0, 0.0);
        assert_eq!(fblab_bounds(ch, 20, &mut up, &mut lo), FblabStatus::Ok);
        assert!(lo < up && (up - 2.8245e-4).abs() < 1e-7);
        let mut json = ptr::null_mut();
        assert_eq!(fblab_bounds_report_json(ch, -1, &mut json), FblabStatus::Ok);
        let doc: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert!(doc["upper"].is_null());
        fblab_string_free(json);
        fblab_channel_free(ch);
    }
}

#[test]
fn simulation_is_seeded() {
    let ch = channel("0.1", false);
    let (mut a, mut b) = (FblabSimStats::default(), FblabSimStats::default());
    unsafe {
        assert_eq!(fblab_simulate(ch, 10, 5000, 42, 1, &mut a), FblabStatus::Ok);
        assert_eq!(fblab_simulate(ch, 10, 5000, 42, 4, &mut b), FblabStatus::Ok);
        fblab_channel_free(ch);
    }
    assert_eq!(a, b);
    assert!(a.ci_low <= a.estimate && a.estimate <= a.ci_high);
}

#[test]
fn error_codes() {
    let mut ch = ptr::null_mut();
    let bad = CString::new("0.7").unwrap();
    assert_eq!(unsafe { fblab_channel_new(bad.as_ptr(), 1, &mut ch) }, FblabStatus::OutOfRange);
    assert!(last_error().contains("0.7"));
    let junk = CString::new("abc").unwrap();
    assert_eq!(unsafe { fblab_channel_new(junk.as_ptr(), 1, &mut ch) }, FblabStatus::InvalidArgument);
    assert_eq!(unsafe { fblab_channel_new(ptr::null(), 1, &mut ch) }, FblabStatus::NullPointer);

    let exact = channel("1/10", true);
    let mut s = FblabSimStats::default();
    assert_eq!(unsafe { fblab_simulate(exact, 3, 10, 1, 1, &mut s) }, FblabStatus::ExactChannelSampling);
    let mut pe = 0.0;
    assert_eq!(unsafe { fblab_bellman_error(exact, 5000, &mut pe) }, FblabStatus::ResourceCap);
    assert_eq!(unsafe { fblab_feedback_exponent(ptr::null(), &mut pe) }, FblabStatus::NullPointer);
    assert_eq!(unsafe { fblab_feedback_exponent(exact, ptr::null_mut()) }, FblabStatus::NullPointer);
    unsafe { fblab_channel_free(exact) };
    assert!(unsafe { fblab_channel_p(ptr::null()) }.is_nan());
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/fblab.h");
    for name in [
        "fblab_last_error",
        "fblab_string_free",
        "fblab_channel_new",
        "fblab_channel_free",
        "fblab_channel_p",
        "fblab_feedback_exponent",
        "fblab_forward_error",
        "fblab_forward_error_exact",
        "fblab_bellman_error",
        "fblab_bounds",
        "fblab_simulate",
        "fblab_bounds_report_json",
        "typedef struct FblabChannel FblabChannel",
        "FBLAB_STATUS_RESOURCE_CAP = 5",
    ] {
        assert!(header.contains(name), "{name} missing from the header");
    }
}
