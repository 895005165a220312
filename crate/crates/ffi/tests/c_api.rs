use std::ffi::{c_char, CStr};
use std::process::Command;
use std::ptr;

use sme_correlate_ffi::*;

fn zoo(name: &CStr) -> *mut SmecModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { smec_model_from_zoo(name.as_ptr(), &mut m) }, SmecStatus::Ok);
    m
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(smec_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn sharp_and_filtered_values() {
    let m = zoo(c"decay_photodetect");
    let (mut dim, mut n_det) = (0, 0);
    assert_eq!(unsafe { smec_model_shape(m, &mut dim, &mut n_det) }, SmecStatus::Ok);
    assert_eq!((dim, n_det), (2, 1));

    let dets: [*const c_char; 1] = [c"d0".as_ptr()];
    let mut v = 0.0;
    assert_eq!(unsafe { smec_sharp_correlation(m, dets.as_ptr(), [1.0].as_ptr(), 1, &mut v) }, SmecStatus::Ok);
    assert!((v - (0.05 + 0.8 * (-1.0f64).exp())).abs() < 1e-9);
    unsafe { smec_model_free(m) };

    let m = zoo(c"pure_noise");
    let dets: [*const c_char; 2] = [c"d0".as_ptr(), c"d0".as_ptr()];
    let s = unsafe {
        smec_filtered_correlation(m, dets.as_ptr(), [0.0, 0.5].as_ptr(), [1.0, 1.5].as_ptr(), 2, 1.5, &mut v)
    };
    assert_eq!(s, SmecStatus::Ok);
    assert!((v - 0.5).abs() < 1e-10);
    unsafe { smec_model_free(m) };
}

#[test]
fn model_from_json() {
    let json = cr#"{
        "dim": 2,
        "hamiltonian": [[[0,0],[0,0]],[[0,0],[0,0]]],
        "detectors": [{"label": "d0", "kind": "diffusive", "eta": 1.0,
                       "operator": [[[1,0],[0,0]],[[0,0],[-1,0]]]}],
        "initial_state": {"basis": 1}
    }"#;
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { smec_model_from_json(json.as_ptr(), &mut m) }, SmecStatus::Ok);
    let dets: [*const c_char; 2] = [c"d0".as_ptr(), c"d0".as_ptr()];
    let mut v = 0.0;
    assert_eq!(
        unsafe { smec_sharp_correlation(m, dets.as_ptr(), [0.2, 0.9].as_ptr(), 2, &mut v) },
        SmecStatus::Ok
    );
    assert!((v - 4.0).abs() < 1e-10);
    unsafe { smec_model_free(m) };

    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { smec_model_from_json(c"{".as_ptr(), &mut bad) }, SmecStatus::Model);
    assert!(bad.is_null());
}

#[test]
fn simulate_and_read_record() {
    let m = zoo(c"decay_photodetect");
    let mut r = ptr::null_mut();
    let s = unsafe { smec_simulate(m, 0.01, 300, 42, 0, SmecScheme::KrausMap as u32, &mut r) };
    assert_eq!(s, SmecStatus::Ok);
    let (mut steps, mut n_det) = (0, 0);
    assert_eq!(unsafe { smec_record_shape(r, &mut steps, &mut n_det) }, SmecStatus::Ok);
    assert_eq!((steps, n_det), (300, 1));
    let (mut data, mut len) = (ptr::null(), 0);
    assert_eq!(unsafe { smec_record_increments(r, 0, &mut data, &mut len) }, SmecStatus::Ok);
    let inc = unsafe { std::slice::from_raw_parts(data, len) };
    assert!(inc.iter().all(|&x| x == 0.0 || x == 1.0));

    let mut r2 = ptr::null_mut();
    assert_eq!(unsafe { smec_simulate(m, 0.01, 300, 42, 0, 0, &mut r2) }, SmecStatus::Ok);
    let (mut data2, mut len2) = (ptr::null(), 0);
    unsafe { smec_record_increments(r2, 0, &mut data2, &mut len2) };
    assert_eq!(inc, unsafe { std::slice::from_raw_parts(data2, len2) });

    assert_eq!(unsafe { smec_record_increments(r, 5, &mut data, &mut len) }, SmecStatus::InvalidArgument);
    assert_eq!(unsafe { smec_simulate(m, 0.01, 10, 1, 0, 7, &mut r2) }, SmecStatus::InvalidArgument);
    assert_eq!(unsafe { smec_simulate(m, -1.0, 10, 1, 0, 0, &mut r2) }, SmecStatus::Trajectory);
    unsafe {
        smec_record_free(r);
        smec_record_free(r2);
        smec_model_free(m);
    }
}

#[test]
fn failures_report_status_and_message() {
    let mut v = 0.0;
    let dets: [*const c_char; 1] = [c"d0".as_ptr()];
    assert_eq!(
        unsafe { smec_sharp_correlation(ptr::null(), dets.as_ptr(), [1.0].as_ptr(), 1, &mut v) },
        SmecStatus::NullPointer
    );
    assert!(last_error().contains("model"));

    let m = zoo(c"decay_photodetect");
    let dets: [*const c_char; 2] = [c"d0".as_ptr(), c"d0".as_ptr()];
    assert_eq!(
        unsafe { smec_sharp_correlation(m, dets.as_ptr(), [1.0, 1.0].as_ptr(), 2, &mut v) },
        SmecStatus::Analytic
    );
    assert!(last_error().contains("1"));
    let unknown: [*const c_char; 1] = [c"nope".as_ptr()];
    assert_eq!(
        unsafe { smec_sharp_correlation(m, unknown.as_ptr(), [1.0].as_ptr(), 1, &mut v) },
        SmecStatus::Analytic
    );
    assert!(last_error().contains("nope"));
    assert_eq!(unsafe { smec_sharp_correlation(m, dets.as_ptr(), [1.0].as_ptr(), 1, ptr::null_mut()) }, SmecStatus::NullPointer);
    unsafe { smec_model_free(m) };
    unsafe { smec_model_free(ptr::null_mut()) };

    let name = unsafe { CStr::from_ptr(smec_status_name(99)) };
    assert_eq!(name.to_str().unwrap(), "unknown");
}

#[test]
fn header_declares_the_api_and_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(dir.join("sme_correlate.h")).unwrap();
    for f in [
        "smec_model_from_json",
        "smec_model_from_zoo",
        "smec_model_free",
        "smec_sharp_correlation",
        "smec_filtered_correlation",
        "smec_simulate",
        "smec_record_increments",
        "smec_record_free",
        "smec_last_error_message",
        "typedef struct SmecModel SmecModel",
        "SMEC_STATUS_OK = 0",
    ] {
        assert!(header.contains(f), "header lacks {f}");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"sme_correlate.h\"\nint probe(void) {\n  SmecModel *m = 0;\n  SmecStatus s = smec_model_from_zoo(\"pure_noise\", &m);\n  smec_model_free(m);\n  return (int)s;\n}\n",
    )
    .unwrap();
    match Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(&dir)
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("skipping C compile check: {e}"),
    }
}
