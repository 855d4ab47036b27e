use std::ffi::{CStr, CString};
use std::ptr;

use korder_ffi::*;

const ARM: &str = include_str!("../../core/data/arm3.world");

fn last_error() -> String {
    unsafe { CStr::from_ptr(korder_last_error()) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn trajectory(r: *const KorderResult) -> (usize, usize, Vec<f64>) {
    let (mut steps, mut n) = (0, 0);
    assert_eq!(
        korder_result_trajectory(r, ptr::null_mut(), 0, &mut steps, &mut n),
        KorderStatus::BufferTooSmall
    );
    let mut buf = vec![0.0; steps * n];
    assert_eq!(korder_result_trajectory(r, buf.as_mut_ptr(), buf.len(), &mut steps, &mut n), KorderStatus::Ok);
    (steps, n, buf)
}

unsafe fn json(r: *const KorderResult) -> String {
    let mut needed = 0;
    assert_eq!(korder_result_json(r, ptr::null_mut(), 0, &mut needed), KorderStatus::BufferTooSmall);
    let mut buf = vec![0u8; needed];
    assert_eq!(korder_result_json(r, buf.as_mut_ptr().cast(), buf.len(), &mut needed), KorderStatus::Ok);
    CStr::from_bytes_with_nul(&buf).unwrap().to_string_lossy().into_owned()
}

#[test]
fn particle_solve_round_trip() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(korder_problem_particle(100, 2, &mut p), KorderStatus::Ok);
        let (mut horizon, mut n) = (0, 0);
        assert_eq!(korder_problem_shape(p, &mut horizon, &mut n), KorderStatus::Ok);
        assert_eq!((horizon, n), (100, 2));

        let mut r = ptr::null_mut();
        assert_eq!(korder_solve_aula(p, ptr::null(), 0, ptr::null_mut(), &mut r), KorderStatus::Ok);
        assert!(korder_result_converged(r));
        assert!(korder_result_max_violation(r) <= 1e-3);
        assert!(korder_result_cost(r).is_finite() && korder_result_wall_time(r) >= 0.0);

        let (steps, n, x) = trajectory(r);
        assert_eq!((steps, n), (101, 2));
        let parsed = korder::cli::BenchmarkResult::from_json(&json(r)).unwrap();
        assert_eq!(parsed.trajectory.as_flat(), &x[..]);

        // same answer from an explicit start
        let mut r2 = ptr::null_mut();
        let x0 = vec![0.0; 202];
        assert_eq!(korder_solve_aula(p, x0.as_ptr(), x0.len(), ptr::null_mut(), &mut r2), KorderStatus::Ok);
        assert_eq!(trajectory(r2).2, x);

        assert_eq!(korder_solve_aula(p, x0.as_ptr(), 5, ptr::null_mut(), &mut r2), KorderStatus::Dimension);
        assert!(last_error().contains("5"), "{}", last_error());

        korder_result_free(r);
        korder_result_free(r2);
        korder_problem_free(p);
    }
}

#[test]
fn starved_solver_still_yields_a_result() {
    unsafe {
        let params = korder_params_new();
        assert_eq!(korder_params_set(params, c("opt/max_iters").as_ptr(), c("1").as_ptr()), KorderStatus::Ok);
        let mut p = ptr::null_mut();
        assert_eq!(korder_problem_particle(40, 2, &mut p), KorderStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(korder_solve_aula(p, ptr::null(), 0, params, &mut r), KorderStatus::NotConverged);
        assert!(!r.is_null() && !korder_result_converged(r));
        korder_result_free(r);
        korder_problem_free(p);
        korder_params_free(params);
    }
}

#[test]
fn move_to_through_the_abi() {
    unsafe {
        let mut w = ptr::null_mut();
        assert_eq!(korder_world_parse(c(ARM).as_ptr(), &mut w), KorderStatus::Ok);
        assert_eq!(korder_world_dim(w), 3);

        let params = korder_params_new();
        assert_eq!(
            korder_params_load_text(params, c("KOMO/moveTo/T = 30\n").as_ptr()),
            KorderStatus::Ok
        );
        let mut r = ptr::null_mut();
        let status = korder_move_to(w, c("tip").as_ptr(), c("goal").as_ptr(), 0, 1, params, &mut r);
        assert_eq!(status, KorderStatus::Ok, "{}", last_error());
        let (steps, n, _) = trajectory(r);
        assert_eq!((steps, n), (31, 3));

        let mut needed = 0;
        let mut small = [0 as std::os::raw::c_char; 4];
        assert_eq!(
            korder_params_log(params, small.as_mut_ptr(), small.len(), &mut needed),
            KorderStatus::BufferTooSmall
        );
        let mut buf = vec![0u8; needed];
        assert_eq!(korder_params_log(params, buf.as_mut_ptr().cast(), buf.len(), &mut needed), KorderStatus::Ok);
        let log = CStr::from_bytes_with_nul(&buf).unwrap().to_str().unwrap().to_owned();
        assert!(log.contains("KOMO/moveTo/T = 30 # file"));
        assert!(log.contains("KOMO/moveTo/collisionMargin = 0.1 # default"));

        let mut p = ptr::null_mut();
        assert_eq!(
            korder_problem_move_to(w, c("tip").as_ptr(), c("goal").as_ptr(), 0, ptr::null_mut(), &mut p),
            KorderStatus::Ok
        );
        let (mut horizon, mut n) = (0, 0);
        korder_problem_shape(p, &mut horizon, &mut n);
        assert_eq!((horizon, n), (40, 3));

        korder_problem_free(p);
        korder_result_free(r);
        korder_params_free(params);
        korder_world_free(w);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut w = ptr::null_mut();
        assert_eq!(korder_world_parse(c("chain 1 1\nbogus 3\n").as_ptr(), &mut w), KorderStatus::Parse);
        assert!(w.is_null());
        assert!(last_error().contains("line 2"), "{}", last_error());

        assert_eq!(korder_world_parse(ptr::null(), &mut w), KorderStatus::NullPointer);
        assert_eq!(korder_world_parse(c("particle 2").as_ptr(), ptr::null_mut()), KorderStatus::NullPointer);
        assert_eq!(korder_world_dim(ptr::null()), 0);
        assert!(korder_result_cost(ptr::null()).is_nan());
        assert!(!korder_result_converged(ptr::null()));

        let mut p = ptr::null_mut();
        assert_eq!(korder_problem_particle(3, 2, &mut p), KorderStatus::InvalidArgument);
        assert!(!last_error().is_empty());

        assert_eq!(korder_world_parse(c(ARM).as_ptr(), &mut w), KorderStatus::Ok);
        let mut r = ptr::null_mut();
        let status = korder_move_to(w, c("nope").as_ptr(), c("goal").as_ptr(), 0, 1, ptr::null_mut(), &mut r);
        assert_eq!(status, KorderStatus::InvalidArgument);
        assert!(last_error().contains("nope"));
        assert!(r.is_null());

        let params = korder_params_new();
        assert_eq!(korder_params_load_text(params, c("no equals sign\n").as_ptr()), KorderStatus::Parse);
        korder_params_free(params);

        // freeing null is a no-op
        korder_world_free(ptr::null_mut());
        korder_problem_free(ptr::null_mut());
        korder_result_free(ptr::null_mut());
        korder_params_free(ptr::null_mut());
        korder_world_free(w);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/korder.h")).unwrap();
    for name in [
        "korder_last_error",
        "korder_world_parse",
        "korder_params_log",
        "korder_problem_particle",
        "korder_solve_aula",
        "korder_move_to",
        "korder_result_trajectory",
        "korder_result_json",
        "KORDER_STATUS_BUFFER_TOO_SMALL",
        "typedef struct KorderWorld KorderWorld",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
