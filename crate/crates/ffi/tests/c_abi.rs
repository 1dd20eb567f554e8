use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use pd_lab_ffi::*;

#[test]
fn scalar_functions() {
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(pdl_rate_i(0.5, &mut v), PdlStatus::Ok);
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert_eq!(pdl_rate_i(1.5, &mut v), PdlStatus::Ok);
        assert_eq!(v, f64::INFINITY);
        assert_eq!(pdl_rate_ik(2, 0.25, &mut v), PdlStatus::Ok);
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert_eq!(pdl_solve_c0(&mut v), PdlStatus::Ok);
        assert!(v > 2.2 && v < 2.5);
        assert_eq!(pdl_homozygosity_moment(2, 5.0, &mut v), PdlStatus::Ok);
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(pdl_homozygosity_moment(1, 5.0, &mut v), PdlStatus::Domain);
        assert_eq!(pdl_moment_pk(1, 1, -1.0, &mut v), PdlStatus::Domain);
        assert_eq!(pdl_rate_i(0.5, ptr::null_mut()), PdlStatus::NullPointer);
    }
}

#[test]
fn grid_handle_lifecycle() {
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(pdl_grid_new(1.0, 0, &mut g), PdlStatus::Ok);
        let mut v = 0.0;
        assert_eq!(pdl_grid_tail(g, 0.6, &mut v), PdlStatus::Ok);
        assert!((v - (1.0f64 / 0.6).ln()).abs() < 1e-12);
        assert_eq!(pdl_grid_normalization(g, &mut v), PdlStatus::Ok);
        assert!((v - 1.0).abs() < 1e-6);
        pdl_grid_free(g);
        pdl_grid_free(ptr::null_mut());
        let mut bad = ptr::null_mut();
        assert_eq!(pdl_grid_new(-2.0, 0, &mut bad), PdlStatus::Domain);
        assert!(bad.is_null());
        let mut buf = [0 as std::ffi::c_char; 256];
        pdl_last_error(buf.as_mut_ptr(), buf.len());
        let msg = CStr::from_ptr(buf.as_ptr()).to_string_lossy();
        assert!(msg.contains("theta"), "{msg}");
        assert_eq!(pdl_grid_tail(ptr::null(), 0.5, &mut v), PdlStatus::NullPointer);
    }
}

#[test]
fn sampler_is_reproducible() {
    let draw = || unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(pdl_sampler_new(3.0, 17, &mut s), PdlStatus::Ok);
        let mut out = Vec::new();
        for _ in 0..5 {
            let mut p = [0.0; 8];
            let mut r = 0.0;
            assert_eq!(pdl_sampler_next(s, p.as_mut_ptr(), p.len(), &mut r), PdlStatus::Ok);
            assert!(p.windows(2).all(|w| w[0] >= w[1]));
            assert!((0.0..1e-6).contains(&r));
            out.push(p);
        }
        pdl_sampler_free(s);
        out
    };
    let a = draw();
    assert_eq!(a, draw());
    assert_ne!(a[0], a[1]);
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let lib = target_dir().join("libpd_lab_ffi.a");
    let cc = Command::new("cc").arg("--version").output();
    if cc.is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "pd_lab.h"

int main(void) {
    double v = 0.0;
    if (pdl_rate_i(0.5, &v) != PdlStatus_Ok || fabs(v - log(2.0)) > 1e-15) return 1;
    PdlDensityGrid *g = NULL;
    if (pdl_grid_new(1.0, 0, &g) != PdlStatus_Ok) return 2;
    if (pdl_grid_tail(g, 0.6, &v) != PdlStatus_Ok || fabs(v - log(1.0 / 0.6)) > 1e-12) return 3;
    pdl_grid_free(g);
    if (pdl_grid_new(0.0, 0, &g) != PdlStatus_Domain) return 4;
    char msg[128];
    pdl_last_error(msg, sizeof msg);
    printf("%s|%s\n", pdl_version(), msg);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with(env!("CARGO_PKG_VERSION")), "{stdout}");
}
