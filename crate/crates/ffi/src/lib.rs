//! C interface to `bpg-lab`.
//!
//! Every fallible function returns a [`BpgStatus`]. On failure the message is
//! stored per thread and can be read with [`bpg_last_error`]. Experiments are
//! opaque handles released with [`bpg_experiment_free`]. Strings handed out
//! through `char **` belong to the caller and are released with
//! [`bpg_string_free`]. Matrices are dense and row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use bpg_lab::bq::{integral_posterior, GpDataset, IntegralPrior};
use bpg_lab::error::Error;
use bpg_lab::estimate::Estimator;
use bpg_lab::harness::config::RawConfig;
use bpg_lab::harness::{
    build_task, grad_compare_csv, initial_theta, optimize_csv, presets, run_grad_compare,
    run_optimize, same_sample_estimates, ExperimentConfig,
};
use bpg_lab::optimize::Problem;
use bpg_lab::task::Task;
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BpgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    DimensionMismatch = 4,
    NotPositiveDefinite = 5,
    Numerical = 6,
    StepCap = 7,
    Diverged = 8,
    TooLarge = 9,
    Config = 10,
    Io = 11,
    Panic = 12,
}

impl From<&Error> for BpgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::ContractViolation(_) | Error::EmptyInput(_) => {
                BpgStatus::InvalidArgument
            }
            Error::DimensionMismatch { .. } => BpgStatus::DimensionMismatch,
            Error::NotPositiveDefinite { .. } => BpgStatus::NotPositiveDefinite,
            Error::NumericalInconsistency(_)
            | Error::ZeroDensity
            | Error::UndefinedAngle
            | Error::RankDeficient => BpgStatus::Numerical,
            Error::StepCapExceeded { .. } => BpgStatus::StepCap,
            Error::Diverged { .. } => BpgStatus::Diverged,
            Error::TooLarge { .. } => BpgStatus::TooLarge,
            Error::Config { .. } => BpgStatus::Config,
            Error::Io(_) => BpgStatus::Io,
        }
    }
}

struct Failure {
    status: BpgStatus,
    message: String,
}

impl Failure {
    fn new(status: BpgStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new((&e).into(), e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BpgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BpgStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            BpgStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(
            BpgStatus::NullPointer,
            format!("`{name}` is null"),
        ))
    } else {
        Ok(())
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(BpgStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn input<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn hand_out(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    let c =
        CString::new(s).map_err(|_| Failure::new(BpgStatus::Numerical, "output contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bpg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL if none occurred.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bpg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bpg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of built-in presets.
#[no_mangle]
pub extern "C" fn bpg_preset_count() -> usize {
    presets::PRESETS.len()
}

/// Name of preset `index` written to `*out` as a caller-owned string.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bpg_preset_name(index: usize, out: *mut *mut c_char) -> BpgStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = presets::PRESETS.get(index).ok_or_else(|| {
            Failure::new(
                BpgStatus::InvalidArgument,
                format!("preset index {index} out of range"),
            )
        })?;
        hand_out(p.name.to_string(), out)
    })
}

/// A parsed experiment configuration together with its environment and policy.
pub struct BpgExperiment {
    raw: RawConfig,
    cfg: ExperimentConfig,
    task: Task,
}

impl BpgExperiment {
    fn build(raw: RawConfig) -> Result<Self, Failure> {
        let cfg = ExperimentConfig::from_raw(raw.clone())?;
        let task = build_task(&cfg)?;
        Ok(BpgExperiment { raw, cfg, task })
    }
}

unsafe fn create(
    raw: impl FnOnce() -> Result<RawConfig, Failure>,
    out: *mut *mut BpgExperiment,
) -> BpgStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let exp = BpgExperiment::build(raw()?)?;
        *out = Box::into_raw(Box::new(exp));
        Ok(())
    })
}

/// Creates an experiment from a built-in preset.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bpg_experiment_from_preset(
    name: *const c_char,
    out: *mut *mut BpgExperiment,
) -> BpgStatus {
    create(
        || {
            let name = text(name, "name")?;
            Ok(RawConfig::parse(presets::find(name)?.text)?)
        },
        out,
    )
}

/// Creates an experiment from `key = value` configuration text.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bpg_experiment_from_text(
    config: *const c_char,
    out: *mut *mut BpgExperiment,
) -> BpgStatus {
    create(|| Ok(RawConfig::parse(text(config, "config")?)?), out)
}

/// Overrides one configuration key. On failure the experiment is unchanged.
///
/// # Safety
/// `exp` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bpg_experiment_set(
    exp: *mut BpgExperiment,
    key: *const c_char,
    value: *const c_char,
) -> BpgStatus {
    guard(|| {
        non_null(exp, "exp")?;
        let mut raw = (*exp).raw.clone();
        raw.set(text(key, "key")?, text(value, "value")?);
        *exp = BpgExperiment::build(raw)?;
        Ok(())
    })
}

/// Releases an experiment. NULL is ignored.
///
/// # Safety
/// `exp` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bpg_experiment_free(exp: *mut BpgExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Number of policy parameters.
///
/// # Safety
/// `exp` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bpg_experiment_dim(
    exp: *const BpgExperiment,
    out: *mut usize,
) -> BpgStatus {
    guard(|| {
        non_null(exp, "exp")?;
        non_null(out, "out")?;
        *out = (*exp).task.policy().dim();
        Ok(())
    })
}

/// Starting parameters of run `run`, written to `theta_out[0..len]`.
///
/// # Safety
/// `exp` must be a live handle and `theta_out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn bpg_experiment_initial_theta(
    exp: *const BpgExperiment,
    run: u64,
    theta_out: *mut f64,
    len: usize,
) -> BpgStatus {
    guard(|| {
        non_null(exp, "exp")?;
        let e = &*exp;
        let theta = initial_theta(&e.cfg, &e.task, run)?;
        check_dim(len, theta.len(), "theta_out")?;
        output(theta_out, len, "theta_out")?.copy_from_slice(theta.as_slice());
        Ok(())
    })
}

fn check_dim(found: usize, expected: usize, context: &'static str) -> Result<(), Failure> {
    if found != expected {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        }
        .into());
    }
    Ok(())
}

/// One gradient estimate from `m` fresh episodes at `theta`.
///
/// `estimator` is one of `mc`, `bq1`, `bq2`, `bq1-sparse`, `bq2-sparse`,
/// `bac`, `bac-sparse`. The sample is drawn from the stream for repetition
/// `rep`, so equal arguments give equal results. `mean_out` receives `len`
/// values. If `cov_out` is not NULL it receives the `len × len` posterior
/// covariance (the sample covariance of the mean for `mc`) when the
/// estimator reports one; `*has_cov` (if not NULL) reports
/// whether it was written.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `cov_out` and `has_cov`
/// may be NULL.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn bpg_experiment_estimate(
    exp: *const BpgExperiment,
    estimator: *const c_char,
    theta: *const f64,
    len: usize,
    m: usize,
    rep: u64,
    mean_out: *mut f64,
    cov_out: *mut f64,
    has_cov: *mut bool,
) -> BpgStatus {
    guard(|| {
        non_null(exp, "exp")?;
        let e = &*exp;
        let est: Estimator = text(estimator, "estimator")?.parse()?;
        check_dim(len, e.task.policy().dim(), "theta")?;
        if m == 0 {
            return Err(Failure::new(
                BpgStatus::InvalidArgument,
                "m must be positive",
            ));
        }
        let theta = DVector::from_column_slice(input(theta, len, "theta")?);
        e.task.policy().validate(&theta)?;
        let mut cfg = e.cfg.clone();
        cfg.estimators = vec![est];
        let result = same_sample_estimates(&cfg, &e.task, &theta, m, rep)?
            .pop()
            .ok_or_else(|| Failure::new(BpgStatus::Numerical, "no estimate produced"))?;
        output(mean_out, len, "mean_out")?.copy_from_slice(result.mean.as_slice());
        let mut wrote = false;
        if !cov_out.is_null() {
            if let Some(cov) = &result.covariance {
                let dst = output(cov_out, len * len, "cov_out")?;
                for i in 0..len {
                    for j in 0..len {
                        dst[i * len + j] = cov[(i, j)];
                    }
                }
                wrote = true;
            }
        }
        if !has_cov.is_null() {
            *has_cov = wrote;
        }
        Ok(())
    })
}

/// Runs the configured gradient comparison and returns its CSV in `*out`.
///
/// # Safety
/// `exp` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bpg_experiment_grad_compare_csv(
    exp: *const BpgExperiment,
    out: *mut *mut c_char,
) -> BpgStatus {
    guard(|| {
        non_null(exp, "exp")?;
        non_null(out, "out")?;
        let rows = run_grad_compare(&(*exp).cfg)?;
        hand_out(grad_compare_csv(&rows), out)
    })
}

/// Runs the configured learning experiment and returns its CSV in `*out`.
///
/// # Safety
/// `exp` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bpg_experiment_optimize_csv(
    exp: *const BpgExperiment,
    out: *mut *mut c_char,
) -> BpgStatus {
    guard(|| {
        non_null(exp, "exp")?;
        non_null(out, "out")?;
        let rows = run_optimize(&(*exp).cfg)?;
        hand_out(optimize_csv(&rows), out)
    })
}

/// Posterior mean and variance of a scalar integral under a GP prior.
///
/// `kernel` and `noise` are `n × n`, `y` and `b` have length `n`. The prior
/// mean of the integrand is zero, `rho0` is the prior mean of the integral
/// and `b0` its prior variance.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn bpg_integral_posterior(
    n: usize,
    kernel: *const f64,
    noise: *const f64,
    y: *const f64,
    b: *const f64,
    rho0: f64,
    b0: f64,
    mean_out: *mut f64,
    var_out: *mut f64,
) -> BpgStatus {
    guard(|| {
        non_null(mean_out, "mean_out")?;
        non_null(var_out, "var_out")?;
        if n == 0 {
            return Err(Error::EmptyInput("integral posterior").into());
        }
        let kernel = DMatrix::from_row_slice(n, n, input(kernel, n * n, "kernel")?);
        let noise = DMatrix::from_row_slice(n, n, input(noise, n * n, "noise")?);
        let y = DVector::from_column_slice(input(y, n, "y")?);
        let prior = IntegralPrior {
            rho0,
            b: DVector::from_column_slice(input(b, n, "b")?),
            b0,
        };
        let (mean, var) = integral_posterior(&prior, &GpDataset::new(kernel, noise, y))?;
        *mean_out = mean;
        *var_out = var;
        Ok(())
    })
}
