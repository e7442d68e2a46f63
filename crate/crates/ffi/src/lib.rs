//! C ABI over `amp_lasso`.
//!
//! Every fallible call returns an [`AmpStatus`]; on failure a message is kept
//! per thread and can be copied out with [`amp_last_error_message`]. Objects
//! cross the boundary as opaque handles that the caller releases with the
//! matching `*_free` function. Panics are caught and reported as
//! `AMP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use amp_lasso::amp::{run_amp, AmpOptions, ThresholdPolicy};
use amp_lasso::instances::{generate, Ensemble, Instance};
use amp_lasso::lasso::{solve_lasso, LassoOptions};
use amp_lasso::scalar::Prior;
use amp_lasso::state_evolution::{self, SeParams};
use amp_lasso::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpStatus {
    Ok = 0,
    InvalidArgument = 1,
    OutOfDomain = 2,
    NotConverged = 3,
    NoSolution = 4,
    DimensionMismatch = 5,
    Divergence = 6,
    Internal = 7,
    Io = 8,
    NullPointer = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpEnsemble {
    Gaussian = 0,
    Rademacher = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpPolicy {
    StateEvolution = 0,
    Empirical = 1,
    Calibrated = 2,
}

/// Asymptotic prediction for the LASSO at one penalty.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AmpPrediction {
    pub tau2_star: f64,
    pub theta_star: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub mse: f64,
    pub l1: f64,
    pub sparsity: f64,
}

/// Summary of a LASSO solve or an AMP run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AmpSolveInfo {
    pub iterations: usize,
    /// KKT residual for the LASSO, last `N^{-1/2} ||x^t - x^{t-1}||` for AMP.
    pub residual: f64,
    pub converged: bool,
}

/// Opaque signal/noise model.
pub struct AmpParams(SeParams);

/// Opaque problem instance `(A, x0, w, y)`.
pub struct AmpInstance(Instance);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> AmpStatus {
    match e {
        Error::InvalidParameter(_) | Error::Validation(_) | Error::Json(_) | Error::Csv(_) => {
            AmpStatus::InvalidArgument
        }
        Error::OutOfDomain { .. } => AmpStatus::OutOfDomain,
        Error::NotConverged { .. } => AmpStatus::NotConverged,
        Error::NoSolution(_) => AmpStatus::NoSolution,
        Error::DimensionMismatch(_) => AmpStatus::DimensionMismatch,
        Error::Divergence { .. } => AmpStatus::Divergence,
        Error::InternalConsistency(_) => AmpStatus::Internal,
        Error::Io(_) => AmpStatus::Io,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
    Buffer { need: usize, got: usize },
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> AmpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AmpStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is NULL"));
            AmpStatus::NullPointer
        }
        Ok(Err(Fail::Buffer { need, got })) => {
            set_error(format!("buffer holds {got} values, {need} needed"));
            AmpStatus::BufferTooSmall
        }
        Err(_) => {
            set_error("panic inside the library".into());
            AmpStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> Result<(), Fail> {
    if len < src.len() {
        return Err(Fail::Buffer { need: src.len(), got: len });
    }
    if dst.is_null() {
        return Err(Fail::Null("output buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidParameter("path is not valid UTF-8".into())))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn amp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn amp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a model with a prior on `k` atoms.
///
/// # Safety
/// `atoms` and `weights` must point to `k` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_params_new(
    delta: f64,
    sigma2: f64,
    atoms: *const f64,
    weights: *const f64,
    k: usize,
    out_params: *mut *mut AmpParams,
) -> AmpStatus {
    guard(|| {
        let dst = out(out_params, "out_params")?;
        let prior = Prior::new(slice(atoms, k, "atoms")?.to_vec(), slice(weights, k, "weights")?.to_vec())?;
        let params = SeParams::new(delta, sigma2, prior)?;
        *dst = Box::into_raw(Box::new(AmpParams(params)));
        Ok(())
    })
}

/// The reference model: `delta = 0.64`, `sigma^2 = 0.2`, three-point prior with mass 0.064 at each of +-1.
///
/// # Safety
/// `out_params` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_params_reference(out_params: *mut *mut AmpParams) -> AmpStatus {
    guard(|| {
        *out(out_params, "out_params")? = Box::into_raw(Box::new(AmpParams(SeParams::reference())));
        Ok(())
    })
}

/// # Safety
/// `params` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn amp_params_free(params: *mut AmpParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// `eta(x; theta)`; `theta` must be nonnegative.
///
/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_soft_threshold(x: f64, theta: f64, out_value: *mut f64) -> AmpStatus {
    guard(|| {
        *out(out_value, "out_value")? = amp_lasso::scalar::soft_threshold(x, theta)?;
        Ok(())
    })
}

/// # Safety
/// `out_alpha` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_alpha_min(delta: f64, out_alpha: *mut f64) -> AmpStatus {
    guard(|| {
        *out(out_alpha, "out_alpha")? = state_evolution::alpha_min(delta)?;
        Ok(())
    })
}

/// # Safety
/// `params` must be a live handle; `out_tau2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_tau2_star(params: *const AmpParams, alpha: f64, out_tau2: *mut f64) -> AmpStatus {
    guard(|| {
        let p = deref(params, "params")?;
        *out(out_tau2, "out_tau2")? = state_evolution::tau2_star(&p.0, alpha)?;
        Ok(())
    })
}

/// # Safety
/// `params` must be a live handle; `out_lambda` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_calibrate_lambda(
    params: *const AmpParams,
    alpha: f64,
    out_lambda: *mut f64,
) -> AmpStatus {
    guard(|| {
        let p = deref(params, "params")?;
        *out(out_lambda, "out_lambda")? = state_evolution::calibrate_lambda(&p.0, alpha)?;
        Ok(())
    })
}

/// # Safety
/// `params` must be a live handle; `out_alpha` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_invert_calibration(
    params: *const AmpParams,
    lambda: f64,
    out_alpha: *mut f64,
) -> AmpStatus {
    guard(|| {
        let p = deref(params, "params")?;
        *out(out_alpha, "out_alpha")? = state_evolution::invert_calibration(&p.0, lambda)?;
        Ok(())
    })
}

/// # Safety
/// `params` must be a live handle; `out_prediction` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_predicted_risk(
    params: *const AmpParams,
    lambda: f64,
    out_prediction: *mut AmpPrediction,
) -> AmpStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let dst = out(out_prediction, "out_prediction")?;
        let b = state_evolution::predicted_risk(&p.0, lambda)?;
        *dst = AmpPrediction {
            tau2_star: b.tau2_star,
            theta_star: b.theta_star,
            alpha: b.alpha,
            lambda: b.lambda,
            mse: b.mse_predicted,
            l1: b.l1_predicted,
            sparsity: b.sparsity_predicted,
        };
        Ok(())
    })
}

/// Draws an instance with `N = n_signal` and `n = round(delta N)`.
///
/// # Safety
/// `params` must be a live handle; `out_instance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_instance_generate(
    params: *const AmpParams,
    n_signal: usize,
    ensemble: AmpEnsemble,
    seed: u64,
    out_instance: *mut *mut AmpInstance,
) -> AmpStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let dst = out(out_instance, "out_instance")?;
        let ens = match ensemble {
            AmpEnsemble::Gaussian => Ensemble::Gaussian,
            AmpEnsemble::Rademacher => Ensemble::Rademacher,
        };
        *dst = Box::into_raw(Box::new(AmpInstance(generate(&p.0, n_signal, ens, seed)?)));
        Ok(())
    })
}

/// # Safety
/// `file` must be a NUL-terminated path; `out_instance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_instance_load(file: *const c_char, out_instance: *mut *mut AmpInstance) -> AmpStatus {
    guard(|| {
        let dst = out(out_instance, "out_instance")?;
        let f = File::open(path(file)?).map_err(Error::from)?;
        *dst = Box::into_raw(Box::new(AmpInstance(Instance::read_from(BufReader::new(f))?)));
        Ok(())
    })
}

/// # Safety
/// `instance` must be a live handle; `file` must be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn amp_instance_save(instance: *const AmpInstance, file: *const c_char) -> AmpStatus {
    guard(|| {
        let inst = deref(instance, "instance")?;
        let f = File::create(path(file)?).map_err(Error::from)?;
        inst.0.write_to(BufWriter::new(f))?;
        Ok(())
    })
}

/// # Safety
/// `instance` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn amp_instance_free(instance: *mut AmpInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Writes `N` (signal length) and `n` (measurements).
///
/// # Safety
/// `instance` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn amp_instance_dims(
    instance: *const AmpInstance,
    out_n_signal: *mut usize,
    out_n_measurements: *mut usize,
) -> AmpStatus {
    guard(|| {
        let inst = deref(instance, "instance")?;
        *out(out_n_signal, "out_n_signal")? = inst.0.n_signal();
        *out(out_n_measurements, "out_n_measurements")? = inst.0.n_measurements();
        Ok(())
    })
}

/// Copies the true signal (`N` values).
///
/// # Safety
/// `instance` must be a live handle; `buf` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn amp_instance_signal(instance: *const AmpInstance, buf: *mut f64, len: usize) -> AmpStatus {
    guard(|| copy_out(&deref(instance, "instance")?.0.x0, buf, len))
}

/// Copies the measurements `y` (`n` values).
///
/// # Safety
/// `instance` must be a live handle; `buf` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn amp_instance_measurements(
    instance: *const AmpInstance,
    buf: *mut f64,
    len: usize,
) -> AmpStatus {
    guard(|| copy_out(&deref(instance, "instance")?.0.y, buf, len))
}

/// Copies `A` in row-major order (`n * N` values).
///
/// # Safety
/// `instance` must be a live handle; `buf` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn amp_instance_matrix(instance: *const AmpInstance, buf: *mut f64, len: usize) -> AmpStatus {
    guard(|| copy_out(deref(instance, "instance")?.0.a.data(), buf, len))
}

/// Solves the LASSO to KKT residual `tol` (pass 0 for the default) and
/// writes the minimizer into `x_out` (`N` values).
///
/// # Safety
/// `instance` must be a live handle; `x_out` must hold `len` writable values;
/// `info` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn amp_solve_lasso(
    instance: *const AmpInstance,
    lambda: f64,
    tol: f64,
    x_out: *mut f64,
    len: usize,
    info: *mut AmpSolveInfo,
) -> AmpStatus {
    guard(|| {
        let inst = deref(instance, "instance")?;
        let mut opts = LassoOptions::default();
        if tol > 0.0 {
            opts.tol = tol;
        }
        let sol = solve_lasso(&inst.0.a, &inst.0.y, lambda, &opts)?;
        copy_out(&sol.x_hat, x_out, len)?;
        if let Some(i) = info.as_mut() {
            *i = AmpSolveInfo { iterations: sol.iterations, residual: sol.kkt_residual, converged: sol.converged };
        }
        Ok(())
    })
}

/// Runs AMP at penalty `lambda` for at most `t_max` steps and writes the
/// final estimate into `x_out` (`N` values).
///
/// # Safety
/// `instance` and `params` must be live handles; `x_out` must hold `len`
/// writable values; `info` must be NULL or writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn amp_run(
    instance: *const AmpInstance,
    params: *const AmpParams,
    lambda: f64,
    t_max: usize,
    stop_tol: f64,
    policy: AmpPolicy,
    x_out: *mut f64,
    len: usize,
    info: *mut AmpSolveInfo,
) -> AmpStatus {
    guard(|| {
        let inst = deref(instance, "instance")?;
        let p = deref(params, "params")?;
        let policy = match policy {
            AmpPolicy::StateEvolution => ThresholdPolicy::StateEvolution,
            AmpPolicy::Empirical => ThresholdPolicy::Empirical,
            AmpPolicy::Calibrated => ThresholdPolicy::Calibrated,
        };
        let opts = AmpOptions { t_max, stop_tol, policy, ..Default::default() };
        let run = run_amp(&inst.0, &p.0, lambda, &opts)?;
        copy_out(&run.state.x, x_out, len)?;
        if let Some(i) = info.as_mut() {
            let last = run.diagnostics.last().and_then(|d| d.delta_x_norm).unwrap_or(f64::NAN);
            *i = AmpSolveInfo { iterations: run.state.t, residual: last, converged: last <= stop_tol };
        }
        Ok(())
    })
}
