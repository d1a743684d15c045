//! C ABI over the simulator core: opaque handles, status codes, and a
//! thread-local error message. The generated header lives in
//! `include/spinchannel.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::ptr;

use spinchannel::channel;
use spinchannel::echo::EchoEngine;
use spinchannel::freefermion::ZeroModePolicy;
use spinchannel::model::ModelParams;
use spinchannel::Error;

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    InvalidArgument = 1,
    DegenerateGroundState = 2,
    SizeLimitExceeded = 3,
    NumericalFailure = 4,
    NoRevivalFound = 5,
    IoError = 6,
}

/// Zero-mode handling of the chain ground state.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScZeroModePolicy {
    /// Fail construction when a quasiparticle energy is numerically zero.
    Reject = 0,
    /// Pick one parity sector deterministically.
    LeaveEmpty = 1,
}

/// Opaque model-parameter handle.
pub struct ScParams {
    inner: ModelParams,
}

/// Opaque echo-engine handle. Thread-safe: concurrent echo evaluations on
/// one engine are allowed.
pub struct ScEngine {
    inner: EchoEngine,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> ScStatus {
    match err {
        Error::InvalidParams(_)
        | Error::SiteOutOfRange { .. }
        | Error::QubitOutOfRange { .. }
        | Error::Config(_)
        | Error::NonPositivePurity(_)
        | Error::InsufficientWindow { .. } => ScStatus::InvalidArgument,
        Error::DegenerateGroundState { .. } => ScStatus::DegenerateGroundState,
        Error::SizeLimitExceeded { .. } => ScStatus::SizeLimitExceeded,
        Error::Numerical { .. } => ScStatus::NumericalFailure,
        Error::NoRevivalFound => ScStatus::NoRevivalFound,
        Error::Io(_) => ScStatus::IoError,
    }
}

fn fail(err: Error) -> ScStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

/// Message of the most recent failure on this thread; valid until the next
/// failing call from the same thread. Never null.
#[no_mangle]
pub extern "C" fn sc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Builds a parameter set. `spacing` is the spacer count m between
/// consecutive coupled sites; returns null on invalid input (see
/// `sc_last_error_message`).
#[no_mangle]
pub extern "C" fn sc_params_new(
    n_qubits: usize,
    gamma: f64,
    lambda: f64,
    coupling: f64,
    epsilon: f64,
    spacing: usize,
) -> *mut ScParams {
    match ModelParams::new(n_qubits, gamma, lambda, coupling, epsilon, spacing) {
        Ok(inner) => Box::into_raw(Box::new(ScParams { inner })),
        Err(err) => {
            let _ = fail(err);
            ptr::null_mut()
        }
    }
}

/// Removes the nearest-neighbor bond with 0-based index `bond` (coupling
/// 0-based sites `bond` and `bond + 1`).
///
/// # Safety
/// `params` must be a live pointer from [`sc_params_new`].
#[no_mangle]
pub unsafe extern "C" fn sc_params_break_bond(params: *mut ScParams, bond: usize) -> ScStatus {
    let Some(handle) = params.as_mut() else {
        set_error("null params handle");
        return ScStatus::InvalidArgument;
    };
    let mut bonds: Vec<usize> = handle.inner.broken_bonds().iter().copied().collect();
    bonds.push(bond + 1);
    match handle.inner.clone().with_broken_bonds(bonds) {
        Ok(updated) => {
            handle.inner = updated;
            ScStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Chain length L = n + (n-1) m of a parameter set.
///
/// # Safety
/// `params` must be a live pointer from [`sc_params_new`].
#[no_mangle]
pub unsafe extern "C" fn sc_params_chain_length(params: *const ScParams) -> usize {
    params.as_ref().map_or(0, |p| p.inner.chain_length())
}

/// # Safety
/// `params` must come from [`sc_params_new`] and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn sc_params_free(params: *mut ScParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Builds an echo engine (diagonalizes the unperturbed chain once).
///
/// # Safety
/// `params` and `out` must be valid pointers; `*out` receives the handle.
#[no_mangle]
pub unsafe extern "C" fn sc_engine_new(
    params: *const ScParams,
    policy: ScZeroModePolicy,
    out: *mut *mut ScEngine,
) -> ScStatus {
    let (Some(params), Some(out)) = (params.as_ref(), out.as_mut()) else {
        set_error("null handle");
        return ScStatus::InvalidArgument;
    };
    let policy = match policy {
        ScZeroModePolicy::Reject => ZeroModePolicy::Reject,
        ScZeroModePolicy::LeaveEmpty => ZeroModePolicy::LeaveEmpty,
    };
    match EchoEngine::with_policy(params.inner.clone(), policy) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(ScEngine { inner }));
            ScStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// # Safety
/// `engine` must come from [`sc_engine_new`] and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn sc_engine_free(engine: *mut ScEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

unsafe fn with_engine<T>(
    engine: *const ScEngine,
    out: *mut T,
    body: impl FnOnce(&EchoEngine) -> spinchannel::Result<T>,
) -> ScStatus {
    let (Some(engine), Some(out)) = (engine.as_ref(), out.as_mut()) else {
        set_error("null handle");
        return ScStatus::InvalidArgument;
    };
    match body(&engine.inner) {
        Ok(value) => {
            *out = value;
            ScStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Generalized Loschmidt echo L_xy at dimensionless time `jt`.
///
/// # Safety
/// `engine`, `out_re`, `out_im` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sc_engine_echo(
    engine: *const ScEngine,
    x_bits: u64,
    y_bits: u64,
    jt: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> ScStatus {
    let Some(im_slot) = out_im.as_mut() else {
        set_error("null output pointer");
        return ScStatus::InvalidArgument;
    };
    with_engine(engine, out_re, |e| {
        let t = jt / e.params().coupling();
        let value = e.echo_bits(x_bits, y_bits, t)?;
        *im_slot = value.im;
        Ok(value.re)
    })
}

/// Exact channel fidelity (guarded at 12 qubits).
///
/// # Safety
/// `engine` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sc_engine_exact_fidelity(
    engine: *const ScEngine,
    jt: f64,
    out: *mut f64,
) -> ScStatus {
    with_engine(engine, out, |e| {
        channel::exact_fidelity(e, jt / e.params().coupling())
    })
}

/// Exact Choi purity (guarded at 12 qubits).
///
/// # Safety
/// `engine` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sc_engine_exact_purity(
    engine: *const ScEngine,
    jt: f64,
    out: *mut f64,
) -> ScStatus {
    with_engine(engine, out, |e| {
        channel::exact_purity(e, jt / e.params().coupling())
    })
}

/// Channel entropy H(J) in bits (guarded at 12 qubits).
///
/// # Safety
/// `engine` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sc_engine_channel_entropy(
    engine: *const ScEngine,
    jt: f64,
    out: *mut f64,
) -> ScStatus {
    with_engine(engine, out, |e| {
        channel::channel_entropy(e, jt / e.params().coupling())
    })
}

/// Sampled channel fidelity over `n_samples` uniform pairs; deterministic
/// in `seed`. `out_std_error` may be null.
///
/// # Safety
/// `engine` and `out_value` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sc_engine_sampled_fidelity(
    engine: *const ScEngine,
    jt: f64,
    n_samples: u64,
    seed: u64,
    out_value: *mut f64,
    out_std_error: *mut f64,
) -> ScStatus {
    with_engine(engine, out_value, |e| {
        let est = channel::sampled_fidelity(e, jt / e.params().coupling(), n_samples, seed)?;
        if let Some(se) = out_std_error.as_mut() {
            *se = est.std_error;
        }
        Ok(est.value)
    })
}

/// Sampled Choi purity; see [`sc_engine_sampled_fidelity`].
///
/// # Safety
/// `engine` and `out_value` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sc_engine_sampled_purity(
    engine: *const ScEngine,
    jt: f64,
    n_samples: u64,
    seed: u64,
    out_value: *mut f64,
    out_std_error: *mut f64,
) -> ScStatus {
    with_engine(engine, out_value, |e| {
        let est = channel::sampled_purity(e, jt / e.params().coupling(), n_samples, seed)?;
        if let Some(se) = out_std_error.as_mut() {
            *se = est.std_error;
        }
        Ok(est.value)
    })
}
