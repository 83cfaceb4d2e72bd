//! C ABI over `ringsum`.
//!
//! Every fallible function returns an `i32` status (`RINGSUM_OK` on success)
//! and writes results through out-pointers. On failure the message is kept
//! per thread; read it with [`ringsum_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ringsum::analysis::{epsilon_total, utility_bound, variance_bound, ScheduleAggregates};
use ringsum::engine::{run_ai, run_si, ProtocolRun};
use ringsum::metrics::estimator;
use ringsum::tradeoff::{solve_harmonic, TradeoffProblem};
use ringsum::{Error, MembershipEvent, NodeId, NoiseDistribution, NoiseSchedule, ProtocolConfig};

pub const RINGSUM_OK: i32 = 0;
pub const RINGSUM_ERR_NULL: i32 = 1;
pub const RINGSUM_ERR_ARGUMENT: i32 = 2;
pub const RINGSUM_ERR_DOMAIN: i32 = 3;
pub const RINGSUM_ERR_MEMBERSHIP: i32 = 4;
pub const RINGSUM_ERR_WINDOW: i32 = 5;
pub const RINGSUM_ERR_NON_LAPLACE: i32 = 6;
pub const RINGSUM_ERR_DEGENERATE: i32 = 7;
pub const RINGSUM_ERR_BUFFER: i32 = 8;
pub const RINGSUM_ERR_PANIC: i32 = 99;

pub const RINGSUM_HARMONIC: i32 = 0;
pub const RINGSUM_GEOMETRIC: i32 = 1;

pub const RINGSUM_LAPLACE: i32 = 0;
pub const RINGSUM_GAUSSIAN: i32 = 1;
pub const RINGSUM_UNIFORM: i32 = 2;

/// Protocol configuration under construction.
pub struct RingsumConfig {
    inner: ProtocolConfig,
}

/// Finished run: final states, estimator windows and message trace.
pub struct RingsumRun {
    inner: ProtocolRun,
}

/// One transmitted value.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RingsumMessage {
    pub k: u64,
    pub sender: u32,
    pub value: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotMember(_) | Error::AlreadyMember(_) | Error::MembershipFloor { .. } => RINGSUM_ERR_MEMBERSHIP,
            Error::WindowNotFull { .. } => RINGSUM_ERR_WINDOW,
            Error::NonLaplace(_) => RINGSUM_ERR_NON_LAPLACE,
            Error::DegenerateSchedule { .. } | Error::DegenerateTradeoff(_) => RINGSUM_ERR_DEGENERATE,
            _ => RINGSUM_ERR_DOMAIN,
        };
        Failure::new(code, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Run `f`, translate errors and panics into a status, record the message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            RINGSUM_OK
        }
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            RINGSUM_ERR_PANIC
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(RINGSUM_ERR_NULL, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn schedule(family: i32, c: f64, param: f64) -> Result<NoiseSchedule, Failure> {
    match family {
        RINGSUM_HARMONIC => Ok(NoiseSchedule::harmonic(c, param)?),
        RINGSUM_GEOMETRIC => Ok(NoiseSchedule::geometric(c, param)?),
        other => Err(Failure::new(RINGSUM_ERR_ARGUMENT, format!("unknown schedule family {other}"))),
    }
}

fn distribution(code: i32) -> Result<NoiseDistribution, Failure> {
    match code {
        RINGSUM_LAPLACE => Ok(NoiseDistribution::Laplace),
        RINGSUM_GAUSSIAN => Ok(NoiseDistribution::Gaussian),
        RINGSUM_UNIFORM => Ok(NoiseDistribution::UniformSymmetric),
        other => Err(Failure::new(RINGSUM_ERR_ARGUMENT, format!("unknown distribution {other}"))),
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ringsum_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ringsum_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// New configuration: `n` secrets sharing one schedule. `param` is `d` for
/// harmonic and `phi` for geometric schedules.
///
/// # Safety
/// `secrets` must point to `n` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ringsum_config_new(
    secrets: *const f64,
    n: usize,
    family: i32,
    c: f64,
    param: f64,
    dist: i32,
    steps: u64,
    seed: u64,
    out: *mut *mut RingsumConfig,
) -> i32 {
    guard(|| {
        non_null(out, "out")?;
        non_null(secrets, "secrets")?;
        let values = std::slice::from_raw_parts(secrets, n).to_vec();
        let inner = ProtocolConfig::uniform(values, schedule(family, c, param)?, distribution(dist)?, steps, seed);
        inner.topology()?;
        *out = Box::into_raw(Box::new(RingsumConfig { inner }));
        Ok(())
    })
}

/// Schedule `node` to leave at step `at`.
///
/// # Safety
/// `config` must be a live handle from [`ringsum_config_new`].
#[no_mangle]
pub unsafe extern "C" fn ringsum_config_add_leave(config: *mut RingsumConfig, at: u64, node: u32) -> i32 {
    guard(|| {
        non_null(config, "config")?;
        (*config).inner.events.push(MembershipEvent::leave(at, NodeId(node)));
        Ok(())
    })
}

/// Schedule `node` to join after `anchor` at step `at` holding `secret`.
///
/// # Safety
/// `config` must be a live handle from [`ringsum_config_new`].
#[no_mangle]
pub unsafe extern "C" fn ringsum_config_add_join(
    config: *mut RingsumConfig,
    at: u64,
    node: u32,
    anchor: u32,
    secret: f64,
) -> i32 {
    guard(|| {
        non_null(config, "config")?;
        (*config).inner.events.push(MembershipEvent::join(at, NodeId(node), NodeId(anchor), secret));
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ringsum_config_free(config: *mut RingsumConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Synchronous run of all configured steps.
///
/// # Safety
/// `config` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ringsum_run_si(config: *const RingsumConfig, out: *mut *mut RingsumRun) -> i32 {
    guard(|| {
        non_null(config, "config")?;
        non_null(out, "out")?;
        let inner = run_si(&(*config).inner)?;
        *out = Box::into_raw(Box::new(RingsumRun { inner }));
        Ok(())
    })
}

/// Asynchronous run with Poisson clocks of `rate` up to time `horizon`.
/// Event times count local ticks.
///
/// # Safety
/// `config` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ringsum_run_ai(
    config: *const RingsumConfig,
    rate: f64,
    horizon: f64,
    out: *mut *mut RingsumRun,
) -> i32 {
    guard(|| {
        non_null(config, "config")?;
        non_null(out, "out")?;
        let inner = run_ai(&(*config).inner, rate, horizon)?;
        *out = Box::into_raw(Box::new(RingsumRun { inner }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ringsum_run_free(run: *mut RingsumRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Current member states ascending by identifier. `*len` always receives the
/// member count; `RINGSUM_ERR_BUFFER` if it exceeds `cap`. Either buffer may
/// be null when `cap` is 0.
///
/// # Safety
/// `run` must be a live handle, `ids` and `values` writable for `cap`
/// elements, `len` writable.
#[no_mangle]
pub unsafe extern "C" fn ringsum_run_states(
    run: *const RingsumRun,
    ids: *mut u32,
    values: *mut f64,
    cap: usize,
    len: *mut usize,
) -> i32 {
    guard(|| {
        non_null(run, "run")?;
        non_null(len, "len")?;
        let states = (*run).inner.states();
        *len = states.len();
        if states.len() > cap {
            return Err(Failure::new(RINGSUM_ERR_BUFFER, format!("{} states, capacity {cap}", states.len())));
        }
        non_null(ids, "ids")?;
        non_null(values, "values")?;
        for (i, (id, x)) in states.into_iter().enumerate() {
            *ids.add(i) = id.0;
            *values.add(i) = x;
        }
        Ok(())
    })
}

/// Message trace in transmission order, with the same size protocol as
/// [`ringsum_run_states`].
///
/// # Safety
/// `run` must be a live handle, `buf` writable for `cap` elements, `len`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ringsum_run_trace(
    run: *const RingsumRun,
    buf: *mut RingsumMessage,
    cap: usize,
    len: *mut usize,
) -> i32 {
    guard(|| {
        non_null(run, "run")?;
        non_null(len, "len")?;
        let trace = (*run).inner.trace();
        *len = trace.len();
        if trace.len() > cap {
            return Err(Failure::new(RINGSUM_ERR_BUFFER, format!("{} messages, capacity {cap}", trace.len())));
        }
        non_null(buf, "buf")?;
        for (i, m) in trace.iter().enumerate() {
            *buf.add(i) = RingsumMessage { k: m.k, sender: m.sender.0, value: m.value };
        }
        Ok(())
    })
}

/// Window-sum estimate of `node` at the run's final step. `k_start` may be
/// null.
///
/// # Safety
/// `run` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn ringsum_estimate(run: *const RingsumRun, node: u32, value: *mut f64, k_start: *mut u64) -> i32 {
    guard(|| {
        non_null(run, "run")?;
        non_null(value, "value")?;
        let e = estimator(&(*run).inner, NodeId(node))?;
        *value = e.value;
        if !k_start.is_null() {
            *k_start = e.k_start;
        }
        Ok(())
    })
}

/// Asymptotic utility and variance bounds for `n` nodes sharing one schedule,
/// with the schedule magnitude read as a standard deviation.
///
/// # Safety
/// `utility` and `variance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ringsum_bounds(
    family: i32,
    c: f64,
    param: f64,
    n: usize,
    utility: *mut f64,
    variance: *mut f64,
) -> i32 {
    guard(|| {
        non_null(utility, "utility")?;
        non_null(variance, "variance")?;
        let agg = ScheduleAggregates::uniform(schedule(family, c, param)?);
        *utility = utility_bound(&agg, n)?;
        *variance = variance_bound(&agg, n)?;
        Ok(())
    })
}

/// Composed Laplace privacy budget over `steps` rounds for sensitivity
/// `delta`.
///
/// # Safety
/// `epsilon` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ringsum_epsilon(
    family: i32,
    c: f64,
    param: f64,
    delta: f64,
    steps: u64,
    epsilon: *mut f64,
) -> i32 {
    guard(|| {
        non_null(epsilon, "epsilon")?;
        let agg = ScheduleAggregates::uniform(schedule(family, c, param)?);
        *epsilon = epsilon_total(&agg, delta, steps)?.total();
        Ok(())
    })
}

/// Optimal harmonic scale `c*` for the weighted objective; `objective` may
/// be null.
///
/// # Safety
/// `c_star` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ringsum_solve_harmonic(
    gamma_u: f64,
    gamma_a: f64,
    gamma_p: f64,
    n: usize,
    delta: f64,
    steps: u64,
    c_star: *mut f64,
    objective: *mut f64,
) -> i32 {
    guard(|| {
        non_null(c_star, "c_star")?;
        let sol = solve_harmonic(&TradeoffProblem::harmonic(gamma_u, gamma_a, gamma_p, n, delta, steps))?;
        *c_star = sol.c_star;
        if !objective.is_null() {
            *objective = sol.objective;
        }
        Ok(())
    })
}
