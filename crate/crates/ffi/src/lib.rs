//! C ABI over `aif-core`.
//!
//! Handles are opaque and owned by the caller, who must release them with the
//! matching `*_free` function. Every fallible call returns an [`AifStatus`];
//! on failure [`aif_last_error`] describes what went wrong on this thread.
//! Vector arguments are `state_dim` doubles unless stated otherwise.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use aif_core::error::AifError;
use aif_core::gaussian::{entropy, kl_divergence, log_prob, DiagonalGaussian};
use aif_core::model::ModelSet;
use aif_core::planner::{plan, PlannerConfig};
use aif_core::policy::{policy_action, HabitPolicy};
use aif_core::prior::{read_prior, PreferredPrior};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AifStatus {
    Ok = 0,
    NullPointer = 1,
    Contract = 2,
    DimensionMismatch = 3,
    MissingArtifact = 4,
    Io = 5,
    Format = 6,
    Config = 7,
    InsufficientRewardData = 8,
    ExpertFailed = 9,
    InvalidUtf8 = 10,
    Panic = 11,
}

/// Trained posterior, transition and likelihood networks.
pub struct AifModels(ModelSet);

/// Per-timestep preferred-state prior.
pub struct AifPrior(PreferredPrior);

/// Habit policy network.
pub struct AifPolicy(HabitPolicy);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &AifError) -> AifStatus {
    match err {
        AifError::Contract(_) => AifStatus::Contract,
        AifError::DimensionMismatch { .. } => AifStatus::DimensionMismatch,
        AifError::InsufficientRewardData(_) => AifStatus::InsufficientRewardData,
        AifError::ExpertFailed { .. } => AifStatus::ExpertFailed,
        AifError::MissingArtifact(_) => AifStatus::MissingArtifact,
        AifError::Io { .. } => AifStatus::Io,
        AifError::Format { .. } => AifStatus::Format,
        AifError::Config(_) => AifStatus::Config,
    }
}

enum Fail {
    Null(&'static str),
    Utf8,
    Core(AifError),
}

impl From<AifError> for Fail {
    fn from(e: AifError) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AifStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AifStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer passed as {what}"));
            AifStatus::NullPointer
        }
        Ok(Err(Fail::Utf8)) => {
            set_error("path is not valid UTF-8".into());
            AifStatus::InvalidUtf8
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            AifStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8)?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn write_gaussian(g: &DiagonalGaussian, mean_out: *mut f64, var_out: *mut f64) -> Result<(), Fail> {
    if mean_out.is_null() || var_out.is_null() {
        return Err(Fail::Null("output buffer"));
    }
    ptr::copy_nonoverlapping(g.mean().as_ptr(), mean_out, g.dim());
    ptr::copy_nonoverlapping(g.variance().as_ptr(), var_out, g.dim());
    Ok(())
}

unsafe fn gaussian_arg(dim: usize, mean: *const f64, var: *const f64) -> Result<DiagonalGaussian, Fail> {
    let m = slice_arg(mean, dim, "mean")?;
    let v = slice_arg(var, dim, "variance")?;
    Ok(DiagonalGaussian::new(m.to_vec(), v.to_vec())?)
}

/// Message for the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn aif_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aif_models_load(path: *const c_char, out: *mut *mut AifModels) -> AifStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let models = ModelSet::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(AifModels(models)));
        Ok(())
    })
}

/// # Safety
/// `models` must come from [`aif_models_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aif_models_free(models: *mut AifModels) {
    if !models.is_null() {
        drop(Box::from_raw(models));
    }
}

/// Latent dimension, or 0 for NULL.
///
/// # Safety
/// `models` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aif_models_state_dim(models: *const AifModels) -> usize {
    models.as_ref().map_or(0, |m| m.0.state_dim)
}

/// Posterior belief over the next state given the previous state, action and observation.
///
/// # Safety
/// All pointers must be valid for `state_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn aif_models_posterior(
    models: *const AifModels,
    s_prev: *const f64,
    action: f64,
    observation: f64,
    mean_out: *mut f64,
    var_out: *mut f64,
) -> AifStatus {
    guard(|| {
        let m = &models.as_ref().ok_or(Fail::Null("models"))?.0;
        let s = slice_arg(s_prev, m.state_dim, "s_prev")?;
        write_gaussian(&m.posterior_infer(s, action, observation)?, mean_out, var_out)
    })
}

/// Predicted next-state belief without an observation.
///
/// # Safety
/// All pointers must be valid for `state_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn aif_models_transition(
    models: *const AifModels,
    s_prev: *const f64,
    action: f64,
    mean_out: *mut f64,
    var_out: *mut f64,
) -> AifStatus {
    guard(|| {
        let m = &models.as_ref().ok_or(Fail::Null("models"))?.0;
        let s = slice_arg(s_prev, m.state_dim, "s_prev")?;
        write_gaussian(&m.transition_predict(s, action)?, mean_out, var_out)
    })
}

/// Observation density of a latent state; writes one mean and one variance.
///
/// # Safety
/// `s` must hold `state_dim` doubles; the outputs one double each.
#[no_mangle]
pub unsafe extern "C" fn aif_models_decode(
    models: *const AifModels,
    s: *const f64,
    mean_out: *mut f64,
    var_out: *mut f64,
) -> AifStatus {
    guard(|| {
        let m = &models.as_ref().ok_or(Fail::Null("models"))?.0;
        let s = slice_arg(s, m.state_dim, "s")?;
        write_gaussian(&m.likelihood_decode(s)?, mean_out, var_out)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aif_prior_load(path: *const c_char, out: *mut *mut AifPrior) -> AifStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let prior = read_prior(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(AifPrior(prior)));
        Ok(())
    })
}

/// # Safety
/// `prior` must come from [`aif_prior_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aif_prior_free(prior: *mut AifPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

/// Number of timesteps, or 0 for NULL.
///
/// # Safety
/// `prior` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aif_prior_horizon(prior: *const AifPrior) -> usize {
    prior.as_ref().map_or(0, |p| p.0.horizon())
}

/// Scores `num_candidates` random action sequences of length `horizon` from
/// the belief and writes the first action of the lowest-G sequence and its G.
///
/// # Safety
/// Handles must be live; belief arrays hold `state_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn aif_plan(
    models: *const AifModels,
    prior: *const AifPrior,
    belief_mean: *const f64,
    belief_var: *const f64,
    tau0: usize,
    num_candidates: usize,
    horizon: usize,
    seed: u64,
    action_out: *mut f64,
    g_out: *mut f64,
) -> AifStatus {
    guard(|| {
        let m = &models.as_ref().ok_or(Fail::Null("models"))?.0;
        let p = &prior.as_ref().ok_or(Fail::Null("prior"))?.0;
        let belief = gaussian_arg(m.state_dim, belief_mean, belief_var)?;
        let action_out = out_arg(action_out, "action_out")?;
        let g_out = out_arg(g_out, "g_out")?;
        let cfg = PlannerConfig {
            num_candidates,
            horizon,
            seed,
            ..PlannerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outcome = plan(m, &belief, p, tau0, &cfg, &mut rng)?;
        *action_out = outcome.action;
        *g_out = outcome.candidates[outcome.chosen].g_value;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aif_policy_load(path: *const c_char, out: *mut *mut AifPolicy) -> AifStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let policy = HabitPolicy::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(AifPolicy(policy)));
        Ok(())
    })
}

/// # Safety
/// `policy` must come from [`aif_policy_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aif_policy_free(policy: *mut AifPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Action in `[-1, 1]` for latent state `s`; `seed` drives stochastic policies only.
///
/// # Safety
/// `s` must hold the policy's `state_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn aif_policy_action(
    policy: *const AifPolicy,
    s: *const f64,
    seed: u64,
    action_out: *mut f64,
) -> AifStatus {
    guard(|| {
        let p = &policy.as_ref().ok_or(Fail::Null("policy"))?.0;
        let s = slice_arg(s, p.state_dim, "s")?;
        let out = out_arg(action_out, "action_out")?;
        *out = policy_action(p, s, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(())
    })
}

/// KL(q || p) between diagonal Gaussians of dimension `dim`.
///
/// # Safety
/// The four arrays hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn aif_gaussian_kl(
    dim: usize,
    q_mean: *const f64,
    q_var: *const f64,
    p_mean: *const f64,
    p_var: *const f64,
    out: *mut f64,
) -> AifStatus {
    guard(|| {
        let q = gaussian_arg(dim, q_mean, q_var)?;
        let p = gaussian_arg(dim, p_mean, p_var)?;
        *out_arg(out, "out")? = kl_divergence(&q, &p)?;
        Ok(())
    })
}

/// Differential entropy in nats.
///
/// # Safety
/// Both arrays hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn aif_gaussian_entropy(dim: usize, mean: *const f64, var: *const f64, out: *mut f64) -> AifStatus {
    guard(|| {
        let g = gaussian_arg(dim, mean, var)?;
        *out_arg(out, "out")? = entropy(&g);
        Ok(())
    })
}

/// Log density of `x`.
///
/// # Safety
/// The three arrays hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn aif_gaussian_log_prob(
    dim: usize,
    x: *const f64,
    mean: *const f64,
    var: *const f64,
    out: *mut f64,
) -> AifStatus {
    guard(|| {
        let g = gaussian_arg(dim, mean, var)?;
        let x = slice_arg(x, dim, "x")?;
        *out_arg(out, "out")? = log_prob(x, &g)?;
        Ok(())
    })
}
