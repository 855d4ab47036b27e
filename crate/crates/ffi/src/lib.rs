//! C ABI over the `korder` crate.
//!
//! Objects are opaque heap handles released with the matching `*_free`
//! function. Every fallible call returns a [`KorderStatus`]; on failure the
//! message is available from [`korder_last_error`] on the same thread.
//! Out-pointers are written only on success (or `KORDER_STATUS_NOT_CONVERGED`,
//! which still yields a result).

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use korder::cli::{
    aula_options, move_to, move_to_problem, particle_around_walls, parse_world, solve_motion,
    BenchmarkResult, Method, ParameterStore,
};
use korder::constrained::BarrierOptions;
use korder::kinematics::KinematicWorld;
use korder::motion::MotionProblem;
use korder::problem_core::{KOrderMarkovProblem, Trajectory};
use korder::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KorderStatus {
    Ok = 0,
    /// A result was produced but the solver did not converge.
    NotConverged = 1,
    NullPointer = 2,
    InvalidArgument = 3,
    Parse = 4,
    Dimension = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Kinematic world.
pub struct KorderWorld(KinematicWorld);
/// Motion problem ready to be solved.
pub struct KorderProblem(MotionProblem);
/// Solver outcome.
pub struct KorderResult(BenchmarkResult);
/// Layered parameter store with access log.
pub struct KorderParams(ParameterStore);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> KorderStatus {
    match e {
        Error::Dimension { .. } | Error::TermShape { .. } | Error::Broadcast { .. } => {
            KorderStatus::Dimension
        }
        Error::Parse { .. } => KorderStatus::Parse,
        Error::NotPositiveDefinite { .. } | Error::Structural { .. } => KorderStatus::Numerical,
        _ => KorderStatus::InvalidArgument,
    }
}

/// Runs `f`, mapping errors and panics to a status and recording the message.
fn guard<F: FnOnce() -> Result<KorderStatus, KorderStatus>>(f: F) -> KorderStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) | Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside korder");
            KorderStatus::Panic
        }
    }
}

fn fail(e: Error) -> KorderStatus {
    set_error(&e.to_string());
    status_of(&e)
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, KorderStatus> {
    if p.is_null() {
        set_error(&format!("{what} is null"));
        return Err(KorderStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        KorderStatus::InvalidArgument
    })
}

unsafe fn out_arg<'a, T>(p: *mut *mut T) -> Result<&'a mut *mut T, KorderStatus> {
    if p.is_null() {
        set_error("output pointer is null");
        return Err(KorderStatus::NullPointer);
    }
    Ok(&mut *p)
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, KorderStatus> {
    if p.is_null() {
        set_error(&format!("{what} is null"));
        return Err(KorderStatus::NullPointer);
    }
    Ok(&*p)
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn korder_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a world description (`chain`, `particle`, `shape`, `obstacle`,
/// `limits`, `base`, `q` lines).
#[no_mangle]
pub unsafe extern "C" fn korder_world_parse(text: *const c_char, out: *mut *mut KorderWorld) -> KorderStatus {
    guard(|| {
        let out = out_arg(out)?;
        let text = str_arg(text, "text")?;
        let w = parse_world(text).map_err(fail)?;
        *out = boxed(KorderWorld(w));
        Ok(KorderStatus::Ok)
    })
}

/// Joint-space dimension, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn korder_world_dim(world: *const KorderWorld) -> usize {
    world.as_ref().map_or(0, |w| w.0.dim())
}

#[no_mangle]
pub unsafe extern "C" fn korder_world_free(world: *mut KorderWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

#[no_mangle]
pub extern "C" fn korder_params_new() -> *mut KorderParams {
    boxed(KorderParams(ParameterStore::new()))
}

/// Sets a command-line level override.
#[no_mangle]
pub unsafe extern "C" fn korder_params_set(
    params: *mut KorderParams,
    key: *const c_char,
    value: *const c_char,
) -> KorderStatus {
    guard(|| {
        if params.is_null() {
            set_error("params is null");
            return Err(KorderStatus::NullPointer);
        }
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        (*params).0.set_cmdline(key, value);
        Ok(KorderStatus::Ok)
    })
}

/// Loads `key = value` lines as the config-file layer.
#[no_mangle]
pub unsafe extern "C" fn korder_params_load_text(params: *mut KorderParams, text: *const c_char) -> KorderStatus {
    guard(|| {
        if params.is_null() {
            set_error("params is null");
            return Err(KorderStatus::NullPointer);
        }
        let text = str_arg(text, "text")?;
        (*params).0.set_file_text(text).map_err(fail)?;
        Ok(KorderStatus::Ok)
    })
}

/// Writes the access log (`key = value # source` lines) as a NUL-terminated
/// string into `buf`. `needed` receives the size including the terminator;
/// returns `KORDER_STATUS_BUFFER_TOO_SMALL` when `capacity` is short.
#[no_mangle]
pub unsafe extern "C" fn korder_params_log(
    params: *const KorderParams,
    buf: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> KorderStatus {
    guard(|| {
        let p = ref_arg(params, "params")?;
        let mut text = Vec::new();
        p.0.write_log(&mut text).map_err(|e| fail(e.into()))?;
        copy_string(&text, buf, capacity, needed)
    })
}

unsafe fn copy_string(text: &[u8], buf: *mut c_char, capacity: usize, needed: *mut usize) -> Result<KorderStatus, KorderStatus> {
    if !needed.is_null() {
        *needed = text.len() + 1;
    }
    if buf.is_null() || capacity < text.len() + 1 {
        set_error("buffer too small");
        return Err(KorderStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
    *buf.add(text.len()) = 0;
    Ok(KorderStatus::Ok)
}

#[no_mangle]
pub unsafe extern "C" fn korder_params_free(params: *mut KorderParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// The particle-around-walls benchmark with horizon `horizon` and order `k`.
#[no_mangle]
pub unsafe extern "C" fn korder_problem_particle(horizon: usize, k: usize, out: *mut *mut KorderProblem) -> KorderStatus {
    guard(|| {
        let out = out_arg(out)?;
        let p = particle_around_walls(horizon, k).map_err(fail)?;
        *out = boxed(KorderProblem(p));
        Ok(KorderStatus::Ok)
    })
}

/// The reaching problem built by `korder_move_to`, without solving it.
/// `params` may be null for defaults; consulted keys are logged into it.
#[no_mangle]
pub unsafe extern "C" fn korder_problem_move_to(
    world: *const KorderWorld,
    endeff: *const c_char,
    target: *const c_char,
    align: u8,
    params: *mut KorderParams,
    out: *mut *mut KorderProblem,
) -> KorderStatus {
    guard(|| {
        let out = out_arg(out)?;
        let w = ref_arg(world, "world")?;
        let endeff = str_arg(endeff, "endeff")?;
        let target = str_arg(target, "target")?;
        let mut local = ParameterStore::new();
        let store = match params.as_mut() {
            Some(p) => &mut p.0,
            None => &mut local,
        };
        let p = move_to_problem(&w.0, endeff, target, align, store).map_err(fail)?;
        *out = boxed(KorderProblem(p));
        Ok(KorderStatus::Ok)
    })
}

/// Horizon `T` and configuration dimension `n`; the trajectory has
/// `(T+1)·n` values.
#[no_mangle]
pub unsafe extern "C" fn korder_problem_shape(
    problem: *const KorderProblem,
    horizon: *mut usize,
    n: *mut usize,
) -> KorderStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        if horizon.is_null() || n.is_null() {
            set_error("output pointer is null");
            return Err(KorderStatus::NullPointer);
        }
        *horizon = p.0.horizon();
        *n = p.0.config_dim();
        Ok(KorderStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn korder_problem_free(problem: *mut KorderProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Solves with the Augmented Lagrangian from `x0` (`len = (T+1)·n` values),
/// or from the last prefix configuration held constant when `x0` is null.
#[no_mangle]
pub unsafe extern "C" fn korder_solve_aula(
    problem: *const KorderProblem,
    x0: *const f64,
    len: usize,
    params: *mut KorderParams,
    out: *mut *mut KorderResult,
) -> KorderStatus {
    guard(|| {
        let out = out_arg(out)?;
        let p = &ref_arg(problem, "problem")?.0;
        let n = p.config_dim();
        let init = if x0.is_null() {
            let pre = p.prefix();
            let last = if pre.is_empty() { vec![0.0; n] } else { pre[pre.len() - n..].to_vec() };
            Trajectory::constant(p.horizon(), &last)
        } else {
            if len != (p.horizon() + 1) * n {
                return Err(fail(Error::Dimension {
                    what: "initial trajectory",
                    expected: (p.horizon() + 1) * n,
                    got: len,
                }));
            }
            let v = std::slice::from_raw_parts(x0, len).to_vec();
            Trajectory::from_flat(v, n).map_err(fail)?
        };
        let mut local = ParameterStore::new();
        let store = match params.as_mut() {
            Some(s) => &mut s.0,
            None => &mut local,
        };
        let aula = aula_options(store).map_err(fail)?;
        let r = solve_motion("aula", p, &init, Method::AugmentedLagrangian, &aula, &BarrierOptions::default(), 1)
            .map_err(fail)?;
        Ok(finish(r, out))
    })
}

fn finish(r: BenchmarkResult, out: &mut *mut KorderResult) -> KorderStatus {
    let converged = r.converged;
    *out = boxed(KorderResult(r));
    if converged {
        KorderStatus::Ok
    } else {
        set_error("solver did not converge");
        KorderStatus::NotConverged
    }
}

/// Builds and solves the reaching problem, running `iterate` warm-restarted
/// rounds. `params` may be null.
#[no_mangle]
pub unsafe extern "C" fn korder_move_to(
    world: *const KorderWorld,
    endeff: *const c_char,
    target: *const c_char,
    align: u8,
    iterate: u32,
    params: *mut KorderParams,
    out: *mut *mut KorderResult,
) -> KorderStatus {
    guard(|| {
        let out = out_arg(out)?;
        let w = ref_arg(world, "world")?;
        let endeff = str_arg(endeff, "endeff")?;
        let target = str_arg(target, "target")?;
        let mut local = ParameterStore::new();
        let store = match params.as_mut() {
            Some(p) => &mut p.0,
            None => &mut local,
        };
        let (_, r) = move_to(&w.0, endeff, target, align, iterate as usize, store).map_err(fail)?;
        Ok(finish(r, out))
    })
}

/// Copies the trajectory (row-major `(T+1) × n`) into `buf`. `steps` and
/// `n` receive the shape even when `capacity` is too small.
#[no_mangle]
pub unsafe extern "C" fn korder_result_trajectory(
    result: *const KorderResult,
    buf: *mut f64,
    capacity: usize,
    steps: *mut usize,
    n: *mut usize,
) -> KorderStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        let x = &r.0.trajectory;
        if !steps.is_null() {
            *steps = x.steps();
        }
        if !n.is_null() {
            *n = x.config_dim();
        }
        let v = x.as_flat();
        if buf.is_null() || capacity < v.len() {
            set_error("buffer too small");
            return Err(KorderStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(KorderStatus::Ok)
    })
}

/// Objective `φᵀφ` at the returned trajectory; NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn korder_result_cost(result: *const KorderResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.final_cost)
}

/// Largest constraint violation; NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn korder_result_max_violation(result: *const KorderResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.kkt.max_violation())
}

#[no_mangle]
pub unsafe extern "C" fn korder_result_converged(result: *const KorderResult) -> bool {
    result.as_ref().is_some_and(|r| r.0.converged)
}

#[no_mangle]
pub unsafe extern "C" fn korder_result_wall_time(result: *const KorderResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.wall_time_s)
}

/// The result as JSON, NUL-terminated; see `korder_params_log` for the
/// buffer protocol.
#[no_mangle]
pub unsafe extern "C" fn korder_result_json(
    result: *const KorderResult,
    buf: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> KorderStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        let json = r.0.to_json().map_err(fail)?;
        copy_string(json.as_bytes(), buf, capacity, needed)
    })
}

#[no_mangle]
pub unsafe extern "C" fn korder_result_free(result: *mut KorderResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
