//! C ABI for `ttess`.
//!
//! Objects cross the boundary as opaque handles and are released with the
//! matching `_free` function. Fallible calls return a [`TtessStatus`]; after a
//! failure, [`ttess_last_error`] describes it for the calling thread. Panics
//! never unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ttess::geometry::ConvexPolygon;
use ttess::inference::{self, NoisConfig};
use ttess::kl::{self, FiniteMeasure};
use ttess::model::{ExponentialModel, ModelKind};
use ttess::sampler::SmfChain;
use ttess::tessellation::TTessellation;
use ttess::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtessStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidTessellation = 4,
    InvalidModel = 5,
    Numerical = 6,
    Estimation = 7,
    Sampler = 8,
    Io = 9,
    Panic = 10,
}

/// A T-tessellation of a convex domain.
pub struct TtessTessellation(TTessellation);

/// An exponential-family Gibbs model.
pub struct TtessModel(ExponentialModel);

/// A split/merge/flip Metropolis-Hastings-Green chain.
pub struct TtessChain(SmfChain);

/// Counts and sums describing a tessellation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TtessStats {
    pub cells: usize,
    pub nseint: usize,
    pub nnbseint: usize,
    pub nbseint: usize,
    pub u: f64,
    pub a2: f64,
    pub angle_sum: f64,
}

/// Settings for [`ttess_nois`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtessNoisOptions {
    pub delta: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

struct Failure(TtessStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DegeneratePolygon(_) | Error::InvalidTessellation(_) => TtessStatus::InvalidTessellation,
            Error::InvalidModel(_) => TtessStatus::InvalidModel,
            Error::Numerical(_) => TtessStatus::Numerical,
            Error::Estimation(_) => TtessStatus::Estimation,
            Error::Sampler(_) => TtessStatus::Sampler,
            Error::Io(_) => TtessStatus::Io,
            _ => TtessStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: Option<String>) {
    let msg = msg.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard(f: impl FnOnce() -> Outcome) -> TtessStatus {
    set_last_error(None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TtessStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(Some(msg));
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(Some(format!("panic: {msg}")));
            TtessStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(TtessStatus::NullPointer, format!("{name} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, name: &str) -> std::result::Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn as_mut<'a, T>(p: *mut T, name: &str) -> std::result::Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn as_slice<'a, T>(p: *const T, len: usize, name: &str) -> std::result::Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn as_str<'a>(p: *const c_char, name: &str) -> std::result::Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(TtessStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn put<T>(out: *mut *mut T, value: T, name: &str) -> Outcome {
    let slot = as_mut(out, name)?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ttess_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn ttess_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ttess_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Empty tessellation of the rectangle `[0, width] x [0, height]`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ttess_tessellation_new_rectangle(
    width: f64,
    height: f64,
    out: *mut *mut TtessTessellation,
) -> TtessStatus {
    guard(|| {
        let domain = ConvexPolygon::rectangle(width, height)?;
        put(out, TtessTessellation(TTessellation::empty(domain)), "out")
    })
}

/// Parses a tessellation from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ttess_tessellation_from_json(
    json: *const c_char,
    out: *mut *mut TtessTessellation,
) -> TtessStatus {
    guard(|| {
        let t = TTessellation::from_json_str(as_str(json, "json")?)?;
        put(out, TtessTessellation(t), "out")
    })
}

/// Serializes a tessellation to JSON. Free the result with `ttess_string_free`.
///
/// # Safety
/// `t` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ttess_tessellation_to_json(
    t: *const TtessTessellation,
    out: *mut *mut c_char,
) -> TtessStatus {
    guard(|| {
        let t = as_ref(t, "tessellation")?;
        let text = serde_json::to_string(&t.0.to_json()).map_err(Error::from)?;
        let slot = as_mut(out, "out")?;
        *slot = CString::new(text).map_err(|e| Failure(TtessStatus::InvalidArgument, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `t` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ttess_tessellation_stats(t: *const TtessTessellation, out: *mut TtessStats) -> TtessStatus {
    guard(|| {
        let t = &as_ref(t, "tessellation")?.0;
        let s = t.statistics_basic();
        *as_mut(out, "out")? = TtessStats {
            cells: t.cell_count(),
            nseint: s.nseint,
            nnbseint: s.nnbseint,
            nbseint: s.nbseint,
            u: s.u,
            a2: s.a2,
            angle_sum: s.angle_sum,
        };
        Ok(())
    })
}

/// Releases a tessellation. NULL is ignored.
///
/// # Safety
/// `t` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ttess_tessellation_free(t: *mut TtessTessellation) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Closed-form CRTT maximum pseudolikelihood estimate.
///
/// # Safety
/// `t` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ttess_crtt_mple(t: *const TtessTessellation, out: *mut f64) -> TtessStatus {
    guard(|| {
        *as_mut(out, "out")? = inference::crtt_mple(&as_ref(t, "tessellation")?.0)?;
        Ok(())
    })
}

/// Builds a model by name (`crtt`, `area` or `angle`) with parameter `theta`.
///
/// # Safety
/// `kind` must be a NUL-terminated string, `theta` must point to `len`
/// doubles and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ttess_model_new(
    kind: *const c_char,
    theta: *const f64,
    len: usize,
    out: *mut *mut TtessModel,
) -> TtessStatus {
    guard(|| {
        let kind: ModelKind = as_str(kind, "kind")?.parse()?;
        let theta = as_slice(theta, len, "theta")?.to_vec();
        put(out, TtessModel(ExponentialModel::builtin(kind, theta)?), "out")
    })
}

/// Number of parameters of `model`, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ttess_model_dimension(model: *const TtessModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dimension())
}

/// Energy `theta . T(t)` of a tessellation under `model`.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ttess_model_energy(
    model: *const TtessModel,
    t: *const TtessTessellation,
    out: *mut f64,
) -> TtessStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(model, "model")?.0.energy(&as_ref(t, "tessellation")?.0);
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ttess_model_free(model: *mut TtessModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Starts a chain from a copy of `init`, targeting a copy of `model`.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ttess_chain_new(
    init: *const TtessTessellation,
    model: *const TtessModel,
    seed: u64,
    out: *mut *mut TtessChain,
) -> TtessStatus {
    guard(|| {
        let state = as_ref(init, "init")?.0.clone();
        let model = as_ref(model, "model")?.0.clone();
        put(out, TtessChain(SmfChain::new(state, model, seed)?), "out")
    })
}

/// Advances the chain by `steps` proposals.
///
/// # Safety
/// `chain` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ttess_chain_run(chain: *mut TtessChain, steps: u64) -> TtessStatus {
    guard(|| {
        as_mut(chain, "chain")?.0.run(steps);
        Ok(())
    })
}

/// Copies the current state into a new tessellation handle.
///
/// # Safety
/// `chain` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ttess_chain_state(chain: *const TtessChain, out: *mut *mut TtessTessellation) -> TtessStatus {
    guard(|| {
        let state = as_ref(chain, "chain")?.0.state().clone();
        put(out, TtessTessellation(state), "out")
    })
}

/// Proposals made so far, or 0 for NULL.
///
/// # Safety
/// `chain` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ttess_chain_iteration(chain: *const TtessChain) -> u64 {
    chain.as_ref().map_or(0, |c| c.0.iteration())
}

/// Releases a chain. NULL is ignored.
///
/// # Safety
/// `chain` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ttess_chain_free(chain: *mut TtessChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Default NOIS settings.
#[no_mangle]
pub extern "C" fn ttess_nois_options_default() -> TtessNoisOptions {
    let d = NoisConfig::default();
    TtessNoisOptions {
        delta: d.delta,
        max_iterations: d.max_iterations,
        seed: 1,
    }
}

/// Maximum pseudolikelihood estimate by Newton optimization with increasing
/// splitting, started from the CRTT estimate.
///
/// `theta_out` receives `theta_len` values, which must equal the model
/// dimension. `options` may be NULL for defaults; `converged` may be NULL.
///
/// # Safety
/// Handles must be live and pointers valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ttess_nois(
    model: *const TtessModel,
    t: *const TtessTessellation,
    options: *const TtessNoisOptions,
    theta_out: *mut f64,
    theta_len: usize,
    converged: *mut bool,
) -> TtessStatus {
    guard(|| {
        let model = &as_ref(model, "model")?.0;
        let t = &as_ref(t, "tessellation")?.0;
        let opts = options.as_ref().copied().unwrap_or_else(|| ttess_nois_options_default());
        if theta_len != model.dimension() {
            return Err(Failure(
                TtessStatus::InvalidArgument,
                format!("theta_len {theta_len} for a model of dimension {}", model.dimension()),
            ));
        }
        if theta_out.is_null() {
            return Err(null("theta_out"));
        }
        let cfg = NoisConfig {
            delta: opts.delta,
            max_iterations: opts.max_iterations,
            ..NoisConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let r = inference::nois(model, t, &cfg, &mut rng)?;
        slice::from_raw_parts_mut(theta_out, theta_len).copy_from_slice(&r.theta_hat);
        if let Some(c) = converged.as_mut() {
            *c = r.converged;
        }
        Ok(())
    })
}

/// Extended Kullback-Leibler divergence of two measures on `n` atoms.
/// Writes `+inf` when `beta` does not dominate `alpha`.
///
/// # Safety
/// `alpha` and `beta` must point to `n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ttess_extended_kl(
    alpha: *const f64,
    beta: *const f64,
    n: usize,
    out: *mut f64,
) -> TtessStatus {
    guard(|| {
        let a = FiniteMeasure::new(as_slice(alpha, n, "alpha")?.to_vec())?;
        let b = FiniteMeasure::new(as_slice(beta, n, "beta")?.to_vec())?;
        *as_mut(out, "out")? = kl::extended_kl(&a, &b)?;
        Ok(())
    })
}
