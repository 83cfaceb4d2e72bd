use std::ffi::CStr;
use std::process::Command;
use std::ptr;

use ringsum_ffi::*;

fn last_error() -> String {
    let p = ringsum_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn config(secrets: &[f64], steps: u64) -> *mut RingsumConfig {
    let mut cfg = ptr::null_mut();
    let st = ringsum_config_new(
        secrets.as_ptr(),
        secrets.len(),
        RINGSUM_HARMONIC,
        10.0,
        1.0,
        RINGSUM_LAPLACE,
        steps,
        5,
        &mut cfg,
    );
    assert_eq!(st, RINGSUM_OK);
    cfg
}

#[test]
fn si_run_conserves_the_sum_and_exposes_states() {
    unsafe {
        let secrets = [4.0, 8.0, 15.0, 16.0, 23.0];
        let cfg = config(&secrets, 50);
        let mut run = ptr::null_mut();
        assert_eq!(ringsum_run_si(cfg, &mut run), RINGSUM_OK);

        let mut len = 0usize;
        assert_eq!(ringsum_run_states(run, ptr::null_mut(), ptr::null_mut(), 0, &mut len), RINGSUM_ERR_BUFFER);
        assert_eq!(len, 5);
        let mut ids = [0u32; 5];
        let mut xs = [0f64; 5];
        assert_eq!(ringsum_run_states(run, ids.as_mut_ptr(), xs.as_mut_ptr(), 5, &mut len), RINGSUM_OK);
        assert_eq!(ids, [1, 2, 3, 4, 5]);
        assert!((xs.iter().sum::<f64>() - 66.0).abs() < 1e-10);

        assert_eq!(ringsum_run_trace(run, ptr::null_mut(), 0, &mut len), RINGSUM_ERR_BUFFER);
        assert_eq!(len, 250);
        let mut msgs = vec![RingsumMessage::default(); len];
        assert_eq!(ringsum_run_trace(run, msgs.as_mut_ptr(), msgs.len(), &mut len), RINGSUM_OK);
        assert_eq!(msgs[0].k, 0);
        assert_eq!(msgs[249].k, 49);

        let mut y = 0.0;
        let mut k_start = 0u64;
        assert_eq!(ringsum_estimate(run, 3, &mut y, &mut k_start), RINGSUM_OK);
        assert_eq!(k_start, 46);
        assert!((y - 66.0).abs() < 5.0, "{y}");
        assert_eq!(ringsum_estimate(run, 9, &mut y, ptr::null_mut()), RINGSUM_ERR_MEMBERSHIP);
        assert!(last_error().contains("not a member"));

        ringsum_run_free(run);
        ringsum_config_free(cfg);
    }
}

#[test]
fn membership_events_flow_through() {
    unsafe {
        let cfg = config(&[1.0, 2.0, 3.0, 4.0], 30);
        assert_eq!(ringsum_config_add_leave(cfg, 10, 4), RINGSUM_OK);
        assert_eq!(ringsum_config_add_join(cfg, 20, 4, 3, 10.0), RINGSUM_OK);
        let mut run = ptr::null_mut();
        assert_eq!(ringsum_run_si(cfg, &mut run), RINGSUM_OK);
        let mut ids = [0u32; 4];
        let mut xs = [0f64; 4];
        let mut len = 0;
        assert_eq!(ringsum_run_states(run, ids.as_mut_ptr(), xs.as_mut_ptr(), 4, &mut len), RINGSUM_OK);
        assert!((xs.iter().sum::<f64>() - 16.0).abs() < 1e-10);
        ringsum_run_free(run);

        assert_eq!(ringsum_config_add_leave(cfg, 25, 1), RINGSUM_OK);
        assert_eq!(ringsum_config_add_leave(cfg, 26, 2), RINGSUM_OK);
        let mut run = ptr::null_mut();
        assert_eq!(ringsum_run_si(cfg, &mut run), RINGSUM_ERR_MEMBERSHIP);
        assert!(run.is_null());
        ringsum_config_free(cfg);
    }
}

#[test]
fn ai_run_conserves_the_sum() {
    unsafe {
        let cfg = config(&[1.0, 2.0, 3.0], 0);
        let mut run = ptr::null_mut();
        assert_eq!(ringsum_run_ai(cfg, 1.0, 200.0, &mut run), RINGSUM_OK);
        let mut xs = [0f64; 3];
        let mut ids = [0u32; 3];
        let mut len = 0;
        assert_eq!(ringsum_run_states(run, ids.as_mut_ptr(), xs.as_mut_ptr(), 3, &mut len), RINGSUM_OK);
        assert!((xs.iter().sum::<f64>() - 6.0).abs() < 1e-10);
        ringsum_run_free(run);
        let mut run = ptr::null_mut();
        assert_eq!(ringsum_run_ai(cfg, -1.0, 200.0, &mut run), RINGSUM_ERR_DOMAIN);
        ringsum_config_free(cfg);
    }
}

#[test]
fn analysis_entry_points() {
    unsafe {
        let (mut u, mut v) = (0.0, 0.0);
        assert_eq!(ringsum_bounds(RINGSUM_HARMONIC, 1000.0, 1.0, 10, &mut u, &mut v), RINGSUM_OK);
        assert!((u - 40557.79).abs() < 0.01, "{u}");
        let pi = std::f64::consts::PI;
        let want = 1e6 * pi * pi * 100.0 / 3.0;
        assert!((v - want).abs() < 1e-9 * want, "{v}");
        assert_eq!(ringsum_bounds(RINGSUM_GEOMETRIC, 1.0, 0.5, 2, &mut u, &mut v), RINGSUM_ERR_DOMAIN);

        let mut eps = 0.0;
        assert_eq!(ringsum_epsilon(RINGSUM_HARMONIC, 1.0, 1.0, 1.0, 2, &mut eps), RINGSUM_OK);
        assert!((eps - 3.0).abs() < 1e-12);
        assert_eq!(ringsum_epsilon(RINGSUM_GEOMETRIC, 1.0, 0.5, 1.0, 2, &mut eps), RINGSUM_OK);
        assert!((eps - 3.0).abs() < 1e-12);

        let (mut c, mut obj) = (0.0, 0.0);
        assert_eq!(ringsum_solve_harmonic(1.0, 1.0, 1.0, 3, 1.0, 2, &mut c, &mut obj), RINGSUM_OK);
        assert!((c - 0.224).abs() < 5e-4);
        assert!(obj.is_finite());
        assert_eq!(
            ringsum_solve_harmonic(1.0, 1.0, 1.0, 3, 1.0, 1, &mut c, ptr::null_mut()),
            RINGSUM_ERR_DEGENERATE
        );
    }
}

#[test]
fn bad_arguments_report_codes_and_messages() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let s = [1.0, 2.0, 3.0];
        assert_eq!(
            ringsum_config_new(s.as_ptr(), 3, 7, 1.0, 1.0, RINGSUM_GAUSSIAN, 5, 0, &mut cfg),
            RINGSUM_ERR_ARGUMENT
        );
        assert!(last_error().contains("family"));
        assert_eq!(
            ringsum_config_new(s.as_ptr(), 2, RINGSUM_HARMONIC, 1.0, 1.0, RINGSUM_GAUSSIAN, 5, 0, &mut cfg),
            RINGSUM_ERR_DOMAIN
        );
        assert_eq!(
            ringsum_config_new(ptr::null(), 3, RINGSUM_HARMONIC, 1.0, 1.0, RINGSUM_LAPLACE, 5, 0, &mut cfg),
            RINGSUM_ERR_NULL
        );
        assert_eq!(
            ringsum_config_new(s.as_ptr(), 3, RINGSUM_GEOMETRIC, 1.0, 1.5, RINGSUM_LAPLACE, 5, 0, &mut cfg),
            RINGSUM_ERR_DOMAIN
        );
        assert!(cfg.is_null());
        let mut run = ptr::null_mut();
        assert_eq!(ringsum_run_si(ptr::null(), &mut run), RINGSUM_ERR_NULL);
        ringsum_config_free(ptr::null_mut());
        ringsum_run_free(ptr::null_mut());

        let (mut u, mut v) = (0.0, 0.0);
        assert_eq!(ringsum_bounds(RINGSUM_HARMONIC, 1.0, 1.0, 5, &mut u, &mut v), RINGSUM_OK);
        assert!(ringsum_last_error_message().is_null());
    }
}

#[test]
fn last_error_is_per_thread() {
    let mut eps = 0.0;
    assert_eq!(
        unsafe { ringsum_epsilon(RINGSUM_HARMONIC, 0.0, 1.0, 1.0, 2, &mut eps) },
        RINGSUM_ERR_DOMAIN
    );
    let other_is_clean = std::thread::spawn(|| ringsum_last_error_message().is_null()).join().unwrap();
    assert!(other_is_clean);
    assert!(!last_error().is_empty());
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(ringsum_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

const HEADER: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/include/ringsum.h");

#[test]
fn generated_header_declares_every_entry_point() {
    let header = std::fs::read_to_string(HEADER).unwrap();
    for name in [
        "ringsum_config_new",
        "ringsum_config_add_leave",
        "ringsum_config_add_join",
        "ringsum_config_free",
        "ringsum_run_si",
        "ringsum_run_ai",
        "ringsum_run_free",
        "ringsum_run_states",
        "ringsum_run_trace",
        "ringsum_estimate",
        "ringsum_bounds",
        "ringsum_epsilon",
        "ringsum_solve_harmonic",
        "ringsum_last_error_message",
        "ringsum_version",
        "typedef struct RingsumConfig RingsumConfig",
        "typedef struct RingsumRun RingsumRun",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

const C_CLIENT: &str = r#"
#include "ringsum.h"

int drive(void) {
    double secrets[3] = {1.0, 2.0, 3.0};
    RingsumConfig *cfg = NULL;
    RingsumRun *run = NULL;
    if (ringsum_config_new(secrets, 3, RINGSUM_HARMONIC, 1.0, 1.0, RINGSUM_LAPLACE, 10, 1, &cfg) != RINGSUM_OK) {
        return 1;
    }
    ringsum_config_add_leave(cfg, 5, 3);
    int st = ringsum_run_si(cfg, &run);
    RingsumMessage msgs[64];
    size_t len = 0;
    ringsum_run_trace(run, msgs, 64, &len);
    ringsum_run_free(run);
    ringsum_config_free(cfg);
    return st == RINGSUM_OK ? 0 : (int)(ringsum_last_error_message() != NULL);
}
"#;

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler on PATH; header compile check not run");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, C_CLIENT).unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
