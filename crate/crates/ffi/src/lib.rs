//! C ABI over `xpi-core`.
//!
//! MDPs and policies cross the boundary as opaque handles created by the
//! `*_new`/`*_from_*` functions and released with the matching `*_free`.
//! Every fallible call returns an [`XpiStatus`]; on failure a message is
//! kept per thread and can be read with [`xpi_last_error_message`].
//! Output arrays are caller-allocated and their lengths are checked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use xpi_core::concentrability::c_seq;
use xpi_core::garnet::{generate_garnet, GarnetSpec};
use xpi_core::io::{mdp_to_json, parse_mdp};
use xpi_core::kappa::{apply_t_kappa, exact_kappa_pi, kappa_greedy_policy, xi};
use xpi_core::mdp::{evaluate_policy, solve_optimal};
use xpi_core::mixture::tightrope_mdp;
use xpi_core::{Error, Mdp, Policy, StateDistribution, ValueFunction};

/// Result codes. `XPI_STATUS_OK` is zero; everything else is an error.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XpiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InvalidMeasure = 4,
    InvalidMdp = 5,
    Singular = 6,
    Parse = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Opaque MDP handle.
pub struct XpiMdp(Mdp);

/// Opaque stochastic policy handle.
pub struct XpiPolicy(Policy);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> XpiStatus {
    match e {
        Error::InvalidArgument(_) => XpiStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => XpiStatus::DimensionMismatch,
        Error::InvalidMeasure(_) => XpiStatus::InvalidMeasure,
        Error::InvalidMdp(_) => XpiStatus::InvalidMdp,
        Error::Singular(_) => XpiStatus::Singular,
        Error::Parse(_) => XpiStatus::Parse,
        Error::Io(_) => XpiStatus::Io,
    }
}

struct Fail(XpiStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(XpiStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> XpiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => XpiStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            XpiStatus::Panic
        }
    }
}

unsafe fn mdp_ref<'a>(m: *const XpiMdp) -> Result<&'a Mdp, Fail> {
    m.as_ref().map(|h| &h.0).ok_or_else(|| null("mdp"))
}

unsafe fn policy_ref<'a>(p: *const XpiPolicy) -> Result<&'a Policy, Fail> {
    p.as_ref().map(|h| &h.0).ok_or_else(|| null("policy"))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Fail(XpiStatus::BufferTooSmall, format!("{what} holds {len}, need {need}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn write_actions(pi: &Policy, out: &mut [usize]) {
    for (s, a) in out.iter_mut().enumerate() {
        *a = pi.mode_action(s);
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xpi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn xpi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses an MDP from a JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn xpi_mdp_from_json(json: *const c_char, out: *mut *mut XpiMdp) -> XpiStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Fail(XpiStatus::Parse, "json is not UTF-8".into()))?;
        store(out, XpiMdp(parse_mdp(text)?))
    })
}

/// Builds the four-state tightrope MDP with penalty `c`.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn xpi_mdp_tightrope(c: f64, gamma: f64, out: *mut *mut XpiMdp) -> XpiStatus {
    guard(|| store(out, XpiMdp(tightrope_mdp(c, gamma)?)))
}

/// Builds a random Garnet MDP. `branching == 0` selects the default.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn xpi_mdp_garnet(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    seed: u64,
    gamma: f64,
    out: *mut *mut XpiMdp,
) -> XpiStatus {
    guard(|| {
        let mut spec = GarnetSpec::new(n_states, n_actions, seed).with_gamma(gamma);
        if branching > 0 {
            spec = spec.with_branching(branching);
        }
        store(out, XpiMdp(generate_garnet(&spec)?))
    })
}

/// # Safety
/// `mdp` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn xpi_mdp_free(mdp: *mut XpiMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Number of states, or 0 for a NULL handle.
///
/// # Safety
/// `mdp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn xpi_mdp_n_states(mdp: *const XpiMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.n_states())
}

/// Number of actions, or 0 for a NULL handle.
///
/// # Safety
/// `mdp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn xpi_mdp_n_actions(mdp: *const XpiMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.n_actions())
}

/// Discount factor, or NaN for a NULL handle.
///
/// # Safety
/// `mdp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn xpi_mdp_gamma(mdp: *const XpiMdp) -> f64 {
    mdp.as_ref().map_or(f64::NAN, |m| m.0.gamma())
}

/// Serializes an MDP to JSON. Release the string with [`xpi_string_free`].
///
/// # Safety
/// `mdp` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn xpi_mdp_to_json(mdp: *const XpiMdp, out: *mut *mut c_char) -> XpiStatus {
    guard(|| {
        let m = mdp_ref(mdp)?;
        if out.is_null() {
            return Err(null("output string"));
        }
        let s = CString::new(mdp_to_json(m)).map_err(|e| Fail(XpiStatus::Parse, e.to_string()))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn xpi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Policy from a row-major `n_states × n_actions` probability table.
///
/// # Safety
/// `probs` must point to `n_states * n_actions` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn xpi_policy_from_probs(
    n_states: usize,
    n_actions: usize,
    probs: *const f64,
    out: *mut *mut XpiPolicy,
) -> XpiStatus {
    guard(|| {
        let len = n_states
            .checked_mul(n_actions)
            .ok_or_else(|| Fail(XpiStatus::InvalidArgument, "table size overflows".into()))?;
        let p = input(probs, len, "probs")?;
        store(out, XpiPolicy(Policy::from_flat(n_states, n_actions, p.to_vec())?))
    })
}

/// Deterministic policy taking `actions[s]` in state `s`.
///
/// # Safety
/// `actions` must point to `n_states` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn xpi_policy_deterministic(
    n_states: usize,
    n_actions: usize,
    actions: *const usize,
    out: *mut *mut XpiPolicy,
) -> XpiStatus {
    guard(|| {
        if actions.is_null() {
            return Err(null("actions"));
        }
        let a = std::slice::from_raw_parts(actions, n_states);
        store(out, XpiPolicy(Policy::deterministic(n_actions, a)?))
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xpi_policy_uniform(n_states: usize, n_actions: usize, out: *mut *mut XpiPolicy) -> XpiStatus {
    guard(|| {
        if n_states == 0 || n_actions == 0 {
            return Err(Fail(XpiStatus::InvalidArgument, "policy needs at least one state and action".into()));
        }
        store(out, XpiPolicy(Policy::uniform(n_states, n_actions)))
    })
}

/// # Safety
/// `policy` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn xpi_policy_free(policy: *mut XpiPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Copies the probability table into `out` (row-major).
///
/// # Safety
/// `policy` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn xpi_policy_probs(policy: *const XpiPolicy, out: *mut f64, len: usize) -> XpiStatus {
    guard(|| {
        let p = policy_ref(policy)?;
        let src = p.probs_flat();
        output(out, len, src.len(), "out")?.copy_from_slice(src);
        Ok(())
    })
}

/// `v^π` into `out_values`.
///
/// # Safety
/// Handles must be live; `out_values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn xpi_evaluate_policy(
    mdp: *const XpiMdp,
    policy: *const XpiPolicy,
    out_values: *mut f64,
    len: usize,
) -> XpiStatus {
    guard(|| {
        let m = mdp_ref(mdp)?;
        let v = evaluate_policy(m, policy_ref(policy)?)?;
        output(out_values, len, m.n_states(), "out_values")?.copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// `v*` and a deterministic optimal policy by value iteration to `tol`.
/// Either output may be NULL to skip it.
///
/// # Safety
/// `mdp` must be live; non-NULL outputs must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn xpi_solve_optimal(
    mdp: *const XpiMdp,
    tol: f64,
    out_values: *mut f64,
    out_actions: *mut usize,
    len: usize,
) -> XpiStatus {
    guard(|| {
        let m = mdp_ref(mdp)?;
        let (v, pi) = solve_optimal(m, tol)?;
        if !out_values.is_null() {
            output(out_values, len, m.n_states(), "out_values")?.copy_from_slice(v.as_slice());
        }
        if !out_actions.is_null() {
            write_actions(&pi, output(out_actions, len, m.n_states(), "out_actions")?);
        }
        Ok(())
    })
}

/// `ξ = γ(1-κ)/(1-γκ)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xpi_xi(gamma: f64, kappa: f64, out: *mut f64) -> XpiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = xi(gamma, kappa)?;
        Ok(())
    })
}

/// Actions of a κ-greedy policy with respect to `values`.
///
/// # Safety
/// `mdp` must be live; `values` and `out_actions` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn xpi_kappa_greedy(
    mdp: *const XpiMdp,
    values: *const f64,
    kappa: f64,
    tol: f64,
    out_actions: *mut usize,
    len: usize,
) -> XpiStatus {
    guard(|| {
        let m = mdp_ref(mdp)?;
        let v = ValueFunction::new(input(values, len.min(m.n_states()), "values")?.to_vec());
        let pi = kappa_greedy_policy(m, &v, kappa, tol)?;
        write_actions(&pi, output(out_actions, len, m.n_states(), "out_actions")?);
        Ok(())
    })
}

/// `T_κ v` into `out_values`.
///
/// # Safety
/// `mdp` must be live; `values` and `out_values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn xpi_apply_t_kappa(
    mdp: *const XpiMdp,
    values: *const f64,
    kappa: f64,
    tol: f64,
    out_values: *mut f64,
    len: usize,
) -> XpiStatus {
    guard(|| {
        let m = mdp_ref(mdp)?;
        let v = ValueFunction::new(input(values, len.min(m.n_states()), "values")?.to_vec());
        let (tv, _) = apply_t_kappa(m, kappa, &v, tol)?;
        output(out_values, len, m.n_states(), "out_values")?.copy_from_slice(tv.as_slice());
        Ok(())
    })
}

/// Exact κ-PI from the uniform policy. Writes the final value and actions
/// and the number of improvement steps taken.
///
/// # Safety
/// `mdp` must be live; outputs must hold `len` elements; `out_iters` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn xpi_kappa_pi(
    mdp: *const XpiMdp,
    kappa: f64,
    tol: f64,
    max_iters: usize,
    out_values: *mut f64,
    out_actions: *mut usize,
    len: usize,
    out_iters: *mut usize,
) -> XpiStatus {
    guard(|| {
        let m = mdp_ref(mdp)?;
        let out = exact_kappa_pi(m, kappa, tol, max_iters, None)?;
        output(out_values, len, m.n_states(), "out_values")?.copy_from_slice(out.value.as_slice());
        write_actions(&out.policy, output(out_actions, len, m.n_states(), "out_actions")?);
        if !out_iters.is_null() {
            *out_iters = out.records.len();
        }
        Ok(())
    })
}

/// Concentrability ratios `c(0..=i_max)` for measures `mu`, `nu`.
///
/// # Safety
/// `mdp` must be live; `mu`, `nu` must hold `n_states` doubles; `out` must
/// hold `len ≥ i_max + 1` doubles.
#[no_mangle]
pub unsafe extern "C" fn xpi_c_seq(
    mdp: *const XpiMdp,
    mu: *const f64,
    nu: *const f64,
    i_max: usize,
    out: *mut f64,
    len: usize,
) -> XpiStatus {
    guard(|| {
        let m = mdp_ref(mdp)?;
        let n = m.n_states();
        let mu = StateDistribution::new(input(mu, n, "mu")?.to_vec())?;
        let nu = StateDistribution::new(input(nu, n, "nu")?.to_vec())?;
        let need = i_max
            .checked_add(1)
            .ok_or_else(|| Fail(XpiStatus::InvalidArgument, "i_max overflows".into()))?;
        let dst = output(out, len, need, "out")?;
        let seq = c_seq(m, &mu, &nu, i_max)?;
        dst.copy_from_slice(&seq.values);
        Ok(())
    })
}
