use circlaw_ffi::*;
use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

fn last_error() -> String {
    let p = circlaw_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn constant_profile_round_trip() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(circlaw_profile_constant(20, &mut p), CirclawStatus::Ok);
        assert_eq!(circlaw_profile_n(p), 20);
        let mut s = ptr::null_mut();
        assert_eq!(circlaw_solve(p, 1.0, 0.0, &mut s), CirclawStatus::Ok);
        let mut info = CirclawSolutionInfo::default();
        assert_eq!(circlaw_solution_info(s, &mut info), CirclawStatus::Ok);
        assert_eq!(info.n, 20);
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!((info.mean_v1 - golden).abs() < 1e-10);
        let mut v = vec![0.0; 20];
        assert_eq!(circlaw_solution_v2(s, v.as_mut_ptr(), v.len()), CirclawStatus::Ok);
        assert!(v.iter().all(|x| (x - golden).abs() < 1e-10));
        assert_eq!(circlaw_solution_u(s, v.as_mut_ptr(), 3), CirclawStatus::BufferTooSmall);
        assert!(last_error().contains("need 20"));
        circlaw_solution_free(s);

        let mut sig = 0.0;
        assert_eq!(circlaw_sigma(p, 0.4, 0.05, CirclawSigmaMethod::Derivative, &mut sig), CirclawStatus::Ok);
        assert!((sig - 1.0 / std::f64::consts::PI).abs() < 1e-6);
        let mut mass = 0.0;
        assert_eq!(circlaw_cumulative_mass(p, 0.5, 0.05, &mut mass), CirclawStatus::Ok);
        assert!((mass - 0.5).abs() < 1e-8);
        let mut jump = 0.0;
        assert_eq!(circlaw_jump_height(p, &mut jump), CirclawStatus::Ok);
        assert!((jump - 1.0 / std::f64::consts::PI).abs() < 1e-10);
        circlaw_profile_free(p);
    }
}

#[test]
fn limit_solution_and_edge_guard() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(circlaw_profile_two_block(16, 3.0, 1.0, 0.5, &mut p), CirclawStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(circlaw_solve_limit(p, 0.5, 0.05, &mut s), CirclawStatus::Ok);
        let mut info = CirclawSolutionInfo::default();
        circlaw_solution_info(s, &mut info);
        assert_eq!(info.eta, 0.0);
        assert!(info.residual < 1e-10);
        circlaw_solution_free(s);
        let mut s2 = ptr::null_mut();
        assert_eq!(circlaw_solve_limit(p, 0.99, 0.05, &mut s2), CirclawStatus::EdgeTooClose);
        assert!(s2.is_null());
        assert!(last_error().contains("tau"));
        circlaw_profile_free(p);
    }
}

#[test]
fn error_codes() {
    unsafe {
        assert_eq!(circlaw_solve(ptr::null(), 1.0, 0.0, ptr::null_mut()), CirclawStatus::NullPointer);
        assert!(last_error().contains("profile is null"));

        let bad = [1.0, -1.0, 1.0, 1.0];
        let mut p = ptr::null_mut();
        assert_eq!(circlaw_profile_from_matrix(2, bad.as_ptr(), &mut p), CirclawStatus::ProfileInvalid);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2\n3,oops\n").unwrap();
        let c = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(circlaw_profile_from_csv(c.as_ptr(), &mut p), CirclawStatus::ProfileParse);
        assert!(p.is_null());

        let good = [2.0, 1.0, 1.0, 2.0];
        assert_eq!(circlaw_profile_from_matrix(2, good.as_ptr(), &mut p), CirclawStatus::Ok);
        assert!(circlaw_last_error().is_null());
        let mut s = ptr::null_mut();
        assert_eq!(circlaw_solve(p, -1.0, 0.0, &mut s), CirclawStatus::InvalidArgument);
        circlaw_profile_free(p);
        circlaw_profile_free(ptr::null_mut());
        circlaw_solution_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/circlaw.h")).unwrap();
    for name in [
        "circlaw_profile_constant",
        "circlaw_profile_from_csv",
        "circlaw_solve_limit",
        "circlaw_solution_info",
        "circlaw_sigma",
        "circlaw_last_error",
        "typedef struct CirclawProfile CirclawProfile",
        "CIRCLAW_STATUS_PROFILE_PARSE = 3",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Compiles a small C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipped");
        return;
    }
    // the test binary lives in target/<profile>/deps, next to the archive
    let deps: PathBuf = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = [deps.join("libcirclaw_ffi.a"), deps.parent().unwrap().join("libcirclaw_ffi.a")]
        .into_iter()
        .find(|p| p.exists())
        .expect("static library is built alongside the tests");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include "circlaw.h"
#include <stdio.h>
int main(void) {
    CirclawProfile *p = NULL;
    CirclawSolution *s = NULL;
    if (circlaw_profile_constant(10, &p) != CIRCLAW_STATUS_OK) return 1;
    if (circlaw_solve(p, 1.0, 0.0, &s) != CIRCLAW_STATUS_OK) return 2;
    double v[10];
    if (circlaw_solution_v1(s, v, 10) != CIRCLAW_STATUS_OK) return 3;
    printf("%.6f\n", v[0]);
    if (circlaw_solve(NULL, 1.0, 0.0, &s) != CIRCLAW_STATUS_NULL_POINTER) return 4;
    circlaw_solution_free(s);
    circlaw_profile_free(p);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.618034");
}
