use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use skorohod::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(skorohod_last_error()) }.to_string_lossy().into_owned()
}

fn half_line() -> *mut SkorohodDomain {
    let mut d = ptr::null_mut();
    let json = c(r#"{"kind": "half_space", "params": {"normal": [1.0], "offset": 0.0}}"#);
    assert_eq!(unsafe { skorohod_domain_from_json(json.as_ptr(), &mut d) }, SkorohodStatus::Ok);
    d
}

#[test]
fn half_line_solution_matches_the_explicit_formula() {
    let d = half_line();
    assert_eq!(unsafe { skorohod_domain_dim(d) }, 1);
    let times = [0.0, 0.25, 0.5, 0.75, 1.0];
    let values = [0.0, -0.5, 0.3, -1.2, 0.0];
    let x0 = 0.2;
    let (mut x, mut k, mut tv) = ([0.0; 5], [0.0; 5], [0.0; 5]);
    let status = unsafe {
        skorohod_solve(d, times.as_ptr(), values.as_ptr(), 5, &x0, x.as_mut_ptr(), k.as_mut_ptr(), tv.as_mut_ptr())
    };
    assert_eq!(status, SkorohodStatus::Ok, "{}", last_error());
    let mut run = 0.0f64;
    for i in 0..5 {
        run = run.max(-(x0 + values[i]));
        assert!((x[i] - (x0 + values[i] + run)).abs() < 1e-12);
        assert!((k[i] - run).abs() < 1e-12);
    }
    assert!((tv[4] - 1.0).abs() < 1e-12);
    unsafe { skorohod_domain_free(d) };
}

#[test]
fn errors_carry_status_and_message() {
    let mut d = ptr::null_mut();
    let bad = c(r#"{"kind": "ball", "params": {"center": [0.0, 0.0], "radius": -1.0}}"#);
    assert_eq!(unsafe { skorohod_domain_from_json(bad.as_ptr(), &mut d) }, SkorohodStatus::Config);
    assert!(last_error().contains("radius"), "{}", last_error());
    assert!(d.is_null());
    assert_eq!(
        unsafe { skorohod_domain_from_json(ptr::null(), &mut d) },
        SkorohodStatus::NullPointer
    );
    let h = half_line();
    let x0 = -1.0;
    let status = unsafe {
        skorohod_solve(h, [0.0, 1.0].as_ptr(), [0.0, 0.0].as_ptr(), 2, &x0, ptr::null_mut(), ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(status, SkorohodStatus::Config);
    unsafe { skorohod_domain_free(h) };
}

#[test]
fn projection_and_euler() {
    let mut d = ptr::null_mut();
    let disc = c(r#"{"kind": "ball", "params": {"center": [0.0, 0.0], "radius": 1.0}}"#);
    assert_eq!(unsafe { skorohod_domain_from_json(disc.as_ptr(), &mut d) }, SkorohodStatus::Ok);
    let mut p = [0.0; 2];
    assert_eq!(unsafe { skorohod_domain_project(d, [3.0, 4.0].as_ptr(), 2, p.as_mut_ptr()) }, SkorohodStatus::Ok);
    assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.8).abs() < 1e-12);

    let mut co = ptr::null_mut();
    let spec = c(r#"{"sigma": "const", "d": 2, "d1": 2, "base": 1.0}"#);
    assert_eq!(unsafe { skorohod_coefficients_from_json(spec.as_ptr(), &mut co) }, SkorohodStatus::Ok);
    let times = [0.0, 0.5, 1.0];
    let w = [0.0, 0.0, 2.0, 0.0, 2.0, 1.0];
    let mut x = [0.0; 6];
    let status = unsafe {
        skorohod_euler_reflected(d, co, times.as_ptr(), w.as_ptr(), 3, [0.0, 0.0].as_ptr(), x.as_mut_ptr(), ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(status, SkorohodStatus::Ok, "{}", last_error());
    assert!((x[2] - 1.0).abs() < 1e-12 && x[3].abs() < 1e-12);
    assert!((x[4] * x[4] + x[5] * x[5] - 1.0).abs() < 1e-9);
    unsafe {
        skorohod_coefficients_free(co);
        skorohod_domain_free(d);
    }
}

#[test]
fn experiment_runs_through_the_boundary() {
    let cfg = c(r#"
experiment = "exp_tail"
seed = 3
[domain]
kind = "half_space"
params = { normal = [1.0], offset = 0.0 }
[coefficients]
sigma = "const"
[params]
x0 = [0.0]
paths = 4000
grid_level = 6
"#);
    let mut r1 = ptr::null_mut();
    let mut r2 = ptr::null_mut();
    assert_eq!(unsafe { skorohod_run_config(cfg.as_ptr(), 1, &mut r1) }, SkorohodStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { skorohod_run_config(cfg.as_ptr(), 3, &mut r2) }, SkorohodStatus::Ok);
    let j1 = unsafe { CStr::from_ptr(skorohod_report_json(r1)) }.to_str().unwrap().to_owned();
    let j2 = unsafe { CStr::from_ptr(skorohod_report_json(r2)) }.to_str().unwrap().to_owned();
    assert_eq!(j1, j2);
    assert!(j1.contains("\"name\": \"exp_tail\""));
    assert_eq!(unsafe { skorohod_report_verdict(r1) }, SkorohodVerdict::Pass);
    unsafe {
        skorohod_report_free(r1);
        skorohod_report_free(r2);
    }

    let bad = c("experiment = \"exp_tail\"\n[params]\nx0 = [0.0]\n");
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { skorohod_run_config(bad.as_ptr(), 1, &mut r) }, SkorohodStatus::Config);
    assert!(r.is_null());
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/skorohod.h")).unwrap();
    for name in [
        "skorohod_last_error",
        "skorohod_domain_from_json",
        "skorohod_solve",
        "skorohod_euler_reflected",
        "skorohod_run_config",
        "skorohod_report_free",
        "SKOROHOD_STATUS_TUBE_TOO_NARROW",
        "typedef struct SkorohodDomain SkorohodDomain",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

/// Compiles a small C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let lib = [deps.join("libskorohod.a"), deps.parent().unwrap().join("libskorohod.a")]
        .into_iter()
        .find(|p| p.exists())
        .expect("static library next to the test binary");
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("skorohod_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "0.250000 0.000000 1.500000 0.750000");
    assert_eq!(lines[1], "1");
}
