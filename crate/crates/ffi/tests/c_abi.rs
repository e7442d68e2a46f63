use std::ffi::{c_char, CString};
use std::process::Command;
use std::ptr;

use amp_lasso_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let len = unsafe { amp_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take(len.min(255)).map(|c| *c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn reference() -> *mut AmpParams {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { amp_params_reference(&mut p) }, AmpStatus::Ok);
    p
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { std::ffi::CStr::from_ptr(amp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn scalar_calls_and_error_codes() {
    let mut v = 0.0;
    assert_eq!(unsafe { amp_soft_threshold(3.0, 1.0, &mut v) }, AmpStatus::Ok);
    assert_eq!(v, 2.0);
    assert_eq!(unsafe { amp_soft_threshold(3.0, -1.0, &mut v) }, AmpStatus::InvalidArgument);
    assert!(last_error().contains("threshold"), "{}", last_error());
    assert_eq!(unsafe { amp_soft_threshold(3.0, 1.0, ptr::null_mut()) }, AmpStatus::NullPointer);
    assert_eq!(last_error(), "out_value is NULL");

    let mut a = 0.0;
    assert_eq!(unsafe { amp_alpha_min(0.64, &mut a) }, AmpStatus::Ok);
    assert!(a > 0.0 && a < 2.0);
    let p = reference();
    let mut t = 0.0;
    assert_eq!(unsafe { amp_tau2_star(p, 0.5 * a, &mut t) }, AmpStatus::OutOfDomain);
    unsafe { amp_params_free(p) };
}

#[test]
fn calibration_round_trip_and_prediction() {
    let p = reference();
    let (mut lambda, mut alpha) = (0.0, 0.0);
    assert_eq!(unsafe { amp_calibrate_lambda(p, 2.0, &mut lambda) }, AmpStatus::Ok);
    assert_eq!(unsafe { amp_invert_calibration(p, lambda, &mut alpha) }, AmpStatus::Ok);
    assert!((alpha - 2.0).abs() < 1e-8);
    let mut pred = AmpPrediction::default();
    assert_eq!(unsafe { amp_predicted_risk(p, lambda, &mut pred) }, AmpStatus::Ok);
    assert!((pred.mse - 0.64 * (pred.tau2_star - 0.2)).abs() < 1e-12);
    assert!((pred.alpha - 2.0).abs() < 1e-8);
    unsafe { amp_params_free(p) };
}

#[test]
fn custom_params_are_validated() {
    let atoms = [0.0, 1.0];
    let mut p = ptr::null_mut();
    let bad = [0.5, 0.6];
    let st = unsafe { amp_params_new(0.5, 0.1, atoms.as_ptr(), bad.as_ptr(), 2, &mut p) };
    assert_eq!(st, AmpStatus::InvalidArgument);
    assert!(p.is_null());
    let good = [0.9, 0.1];
    let st = unsafe { amp_params_new(0.5, 0.1, atoms.as_ptr(), good.as_ptr(), 2, &mut p) };
    assert_eq!(st, AmpStatus::Ok);
    assert!(!p.is_null());
    let st = unsafe { amp_params_new(0.5, 0.1, ptr::null(), good.as_ptr(), 2, &mut p) };
    assert_eq!(st, AmpStatus::NullPointer);
    unsafe { amp_params_free(p) };
    unsafe { amp_params_free(ptr::null_mut()) };
}

#[test]
fn instance_solvers_and_buffers() {
    let p = reference();
    let mut inst = ptr::null_mut();
    assert_eq!(unsafe { amp_instance_generate(p, 200, AmpEnsemble::Gaussian, 3, &mut inst) }, AmpStatus::Ok);
    let (mut big_n, mut n) = (0usize, 0usize);
    assert_eq!(unsafe { amp_instance_dims(inst, &mut big_n, &mut n) }, AmpStatus::Ok);
    assert_eq!((big_n, n), (200, 128));

    let mut small = vec![0.0; 10];
    let st = unsafe { amp_instance_signal(inst, small.as_mut_ptr(), small.len()) };
    assert_eq!(st, AmpStatus::BufferTooSmall);
    let mut a = vec![0.0; n * big_n];
    assert_eq!(unsafe { amp_instance_matrix(inst, a.as_mut_ptr(), a.len()) }, AmpStatus::Ok);
    let mut y = vec![0.0; n];
    assert_eq!(unsafe { amp_instance_measurements(inst, y.as_mut_ptr(), y.len()) }, AmpStatus::Ok);

    let mut x_lasso = vec![0.0; big_n];
    let mut info = AmpSolveInfo::default();
    let st = unsafe { amp_solve_lasso(inst, 1.0, 0.0, x_lasso.as_mut_ptr(), big_n, &mut info) };
    assert_eq!(st, AmpStatus::Ok);
    assert!(info.converged && info.residual <= 1e-8);

    let mut x_amp = vec![0.0; big_n];
    let st = unsafe {
        amp_run(inst, p, 1.0, 300, 1e-10, AmpPolicy::Calibrated, x_amp.as_mut_ptr(), big_n, &mut info)
    };
    assert_eq!(st, AmpStatus::Ok);
    let gap: f64 = x_amp.iter().zip(&x_lasso).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / big_n as f64;
    assert!(gap < 1e-6, "gap {gap}");

    let st = unsafe { amp_solve_lasso(inst, -1.0, 0.0, x_lasso.as_mut_ptr(), big_n, ptr::null_mut()) };
    assert_eq!(st, AmpStatus::InvalidArgument);

    unsafe {
        amp_instance_free(inst);
        amp_params_free(p);
    }
}

#[test]
fn instance_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = CString::new(dir.path().join("inst.bin").to_str().unwrap()).unwrap();
    let p = reference();
    let mut inst = ptr::null_mut();
    assert_eq!(unsafe { amp_instance_generate(p, 50, AmpEnsemble::Rademacher, 9, &mut inst) }, AmpStatus::Ok);
    assert_eq!(unsafe { amp_instance_save(inst, file.as_ptr()) }, AmpStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { amp_instance_load(file.as_ptr(), &mut back) }, AmpStatus::Ok);
    let (mut x1, mut x2) = (vec![0.0; 50], vec![0.0; 50]);
    unsafe {
        amp_instance_signal(inst, x1.as_mut_ptr(), 50);
        amp_instance_signal(back, x2.as_mut_ptr(), 50);
    }
    assert_eq!(x1, x2);
    let missing = CString::new(dir.path().join("nope.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { amp_instance_load(missing.as_ptr(), &mut back) }, AmpStatus::Io);
    unsafe {
        amp_instance_free(inst);
        amp_instance_free(back);
        amp_params_free(p);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/amp_lasso.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["amp_run", "amp_solve_lasso", "amp_last_error_message", "AMP_STATUS_NULL_POINTER"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).status()
    else {
        eprintln!("no C compiler found, syntax check skipped");
        return;
    };
    assert!(status.success());
}
