use std::ffi::{CStr, CString};
use std::ptr;

use canm_ffi::*;

fn last_error() -> String {
    let p = canm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn desk() -> *mut CanmNetwork {
    let mut net = ptr::null_mut();
    let preset = CString::new("desk").unwrap();
    assert_eq!(unsafe { canm_network_from_preset(preset.as_ptr(), 1, &mut net) }, CanmStatus::Ok);
    assert!(canm_last_error().is_null());
    net
}

#[test]
fn fresh_network_returns_the_interpolated_input() {
    let net = desk();
    let (mut h, mut w) = (0, 0);
    assert_eq!(unsafe { canm_network_input_size(net, &mut h, &mut w) }, CanmStatus::Ok);
    assert_eq!((h, w), (64, 64));
    let mut count = 0;
    assert_eq!(unsafe { canm_network_param_count(net, &mut count) }, CanmStatus::Ok);
    assert_eq!(count, 367_992);

    let reference: Vec<f64> = (0..h * w).map(|i| (i % 17) as f64 / 17.0).collect();
    let lr: Vec<f64> = (0..h * w).map(|i| (i % 5) as f64 / 5.0).collect();
    let mut out = vec![0.0; h * w];
    let s = unsafe { canm_network_forward(net, reference.as_ptr(), lr.as_ptr(), h, w, out.as_mut_ptr()) };
    assert_eq!(s, CanmStatus::Ok);
    assert_eq!(out, lr);

    let s = unsafe { canm_network_forward(net, reference.as_ptr(), lr.as_ptr(), 32, 32, out.as_mut_ptr()) };
    assert_eq!(s, CanmStatus::Shape);
    assert!(last_error().contains("32"), "{}", last_error());
    unsafe { canm_network_free(net) };
}

#[test]
fn checkpoints_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let net = desk();
    assert_eq!(unsafe { canm_network_save(net, path.as_ptr()) }, CanmStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { canm_network_open(path.as_ptr(), &mut back) }, CanmStatus::Ok);
    let mut count = 0;
    assert_eq!(unsafe { canm_network_param_count(back, &mut count) }, CanmStatus::Ok);
    assert_eq!(count, 367_992);
    unsafe {
        canm_network_free(net);
        canm_network_free(back);
    }
    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { canm_network_open(missing.as_ptr(), &mut h) }, CanmStatus::Io);
    assert!(h.is_null());
}

#[test]
fn argument_errors() {
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { canm_network_from_preset(ptr::null(), 0, &mut net) }, CanmStatus::NullPointer);
    let bad = CString::new("huge").unwrap();
    assert_eq!(unsafe { canm_network_from_preset(bad.as_ptr(), 0, &mut net) }, CanmStatus::InvalidArgument);
    assert!(last_error().contains("huge"));
    let json = CString::new("{\"input_size\": [64, 64]}").unwrap();
    assert_eq!(unsafe { canm_network_from_json(json.as_ptr(), 0, &mut net) }, CanmStatus::Config);
    assert!(net.is_null());
    let mut count = 0;
    assert_eq!(unsafe { canm_network_param_count(ptr::null(), &mut count) }, CanmStatus::NullPointer);
    unsafe { canm_network_free(ptr::null_mut()) };
    unsafe { canm_string_free(ptr::null_mut()) };
}

#[test]
fn degrade_and_metrics() {
    let (h, w) = (16, 16);
    let img = vec![0.25; h * w];
    let mut small = vec![0.0; 64];
    let mut interp = vec![0.0; h * w];
    assert_eq!(unsafe { canm_degrade(img.as_ptr(), h, w, 2, small.as_mut_ptr(), interp.as_mut_ptr()) }, CanmStatus::Ok);
    assert!(interp.iter().chain(&small).all(|v| (v - 0.25).abs() < 1e-12));
    assert_eq!(unsafe { canm_degrade(img.as_ptr(), h, w, 3, ptr::null_mut(), interp.as_mut_ptr()) }, CanmStatus::InvalidArgument);

    let b: Vec<f64> = img.iter().map(|v| v + 0.1).collect();
    let mut db = 0.0;
    assert_eq!(unsafe { canm_psnr(img.as_ptr(), b.as_ptr(), h, w, 1.0, &mut db) }, CanmStatus::Ok);
    assert!((db - 20.0).abs() < 1e-10);
    let mut s = 0.0;
    assert_eq!(unsafe { canm_ssim(img.as_ptr(), img.as_ptr(), h, w, 1.0, &mut s) }, CanmStatus::Ok);
    assert!((s - 1.0).abs() < 1e-12);
}

#[test]
fn oracle_suite_report() {
    let suite = CString::new("oracle").unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { canm_verify(suite.as_ptr(), &mut report) }, CanmStatus::Ok);
    let text = unsafe { CStr::from_ptr(report) }.to_str().unwrap().to_owned();
    unsafe { canm_string_free(report) };
    assert!(text.starts_with("{\"passed\":true"), "{}", &text[..40]);
    let bad = CString::new("sometimes").unwrap();
    assert_eq!(unsafe { canm_verify(bad.as_ptr(), ptr::null_mut()) }, CanmStatus::InvalidArgument);
    let version = unsafe { CStr::from_ptr(canm_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
