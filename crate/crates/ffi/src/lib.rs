//! C ABI over the delay kinetic laboratory.
//!
//! Conventions:
//! - Functions returning [`DvfpStatus`] write their results through out
//!   pointers and return `Ok` (0) on success. On failure a thread-local
//!   message is set, readable via [`dvfp_last_error_message`].
//! - Opaque handles ([`DvfpModel`]) are created and destroyed by this
//!   library; free them with their `_free` function exactly once.
//! - All arrays are caller-allocated; lengths are element counts.
//!
//! The committed header lives at `include/dvfp.h`; rebuild it with
//! `cargo build -p dvfp-ffi --features gen_h`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dvfp::error::Error;
use dvfp::kummer::{self, KummerParams};
use dvfp::metrics::{dist2_exact, distq_coupled_upper, distq_exact, PointCloud, QuadraticForm};
use dvfp::model::{DriftModel, Interaction, Perturbation};
use dvfp::rates;
use dvfp::simulator::{gaussian_init, run_coupled, SimConfig};

/// Status code of every fallible call. Mirrors the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DvfpStatus {
    Ok = 0,
    /// Null pointer, non-finite input, shape mismatch.
    InvalidArgument = 1,
    /// Parameters outside the validity region of the analysis.
    OutOfValidity = 2,
    /// Divergence, non-convergence or loss of positivity.
    NumericalFailure = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn status_of(err: &Error) -> DvfpStatus {
    match err.exit_code() {
        1 => DvfpStatus::InvalidArgument,
        2 => DvfpStatus::OutOfValidity,
        _ => DvfpStatus::NumericalFailure,
    }
}

fn fail(err: Error) -> DvfpStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

fn guard<F: FnOnce() -> DvfpStatus>(f: F) -> DvfpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            DvfpStatus::NumericalFailure
        }
    }
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dvfp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dvfp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

macro_rules! nonnull {
    ($ptr:expr, $name:literal) => {
        if $ptr.is_null() {
            set_error(concat!($name, " must not be null"));
            return DvfpStatus::InvalidArgument;
        }
    };
}

/// Principal branch of the Lambert W function on [0, inf).
///
/// # Safety
/// `out` must point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn dvfp_lambert_w0(z: f64, out: *mut f64) -> DvfpStatus {
    guard(|| {
        nonnull!(out, "out");
        match rates::lambert_w0(z) {
            Ok(w) => {
                unsafe { *out = w };
                DvfpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Decay rate a - W(b H exp(a H))/H of the delay comparison equation.
///
/// # Safety
/// `out` must point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn dvfp_halanay_rate(a: f64, b: f64, h: f64, out: *mut f64) -> DvfpStatus {
    guard(|| {
        nonnull!(out, "out");
        match rates::halanay_rate(a, b, h) {
            Ok(v) => {
                unsafe { *out = v };
                DvfpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// The rate pair (lambda1, lambda2) of the contraction estimate.
///
/// # Safety
/// `out_lambda1` and `out_lambda2` must point to writable f64s.
#[no_mangle]
pub unsafe extern "C" fn dvfp_lambdas(
    gamma: f64,
    eta: f64,
    out_lambda1: *mut f64,
    out_lambda2: *mut f64,
) -> DvfpStatus {
    guard(|| {
        nonnull!(out_lambda1, "out_lambda1");
        nonnull!(out_lambda2, "out_lambda2");
        match rates::lambdas(gamma, eta) {
            Ok((l1, l2)) => {
                unsafe {
                    *out_lambda1 = l1;
                    *out_lambda2 = l2;
                }
                DvfpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Combined decay rate lambda(gamma, eta, H).
///
/// # Safety
/// `out` must point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn dvfp_overall_rate(
    gamma: f64,
    eta: f64,
    h: f64,
    out: *mut f64,
) -> DvfpStatus {
    guard(|| {
        nonnull!(out, "out");
        match rates::overall_rate(gamma, eta, h) {
            Ok(v) => {
                unsafe { *out = v };
                DvfpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Largest admissible interaction size 2 gamma / (3 (1 + gamma)).
#[no_mangle]
pub extern "C" fn dvfp_eta_bar(gamma: f64) -> f64 {
    rates::eta_bar(gamma)
}

/// Non-interacting decay rate gamma (1 - sqrt(gamma^2/(4 + gamma^2))).
#[no_mangle]
pub extern "C" fn dvfp_hypocoercive_rate(gamma: f64) -> f64 {
    rates::hypocoercive_rate(gamma)
}

/// Friction maximizing the non-interacting rate: sqrt(2 (sqrt(5) - 1)).
#[no_mangle]
pub extern "C" fn dvfp_optimal_friction() -> f64 {
    rates::optimal_friction()
}

/// Kummer's function M(lam, 1, tau) for lam in [0, 1], tau >= 0.
///
/// # Safety
/// `out` must point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn dvfp_kummer_m(lam: f64, tau: f64, out: *mut f64) -> DvfpStatus {
    guard(|| {
        nonnull!(out, "out");
        match kummer::kummer_m(lam, tau) {
            Ok(v) => {
                unsafe { *out = v };
                DvfpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Infinite-delay comparison solution phi(t) through (t0, y0).
///
/// # Safety
/// `out` must point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn dvfp_phi_infinite_delay(
    lambda1: f64,
    lambda2: f64,
    y0: f64,
    t0: f64,
    t: f64,
    out: *mut f64,
) -> DvfpStatus {
    guard(|| {
        nonnull!(out, "out");
        let params = match KummerParams::new(lambda1, lambda2, y0, t0) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match kummer::phi_infinite_delay(&params, t) {
            Ok(v) => {
                unsafe { *out = v };
                DvfpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn cloud_from_raw(
    data: *const f64,
    n: usize,
    dim: usize,
    name: &str,
) -> Result<PointCloud, Error> {
    if data.is_null() {
        return Err(Error::InvalidInput(format!("{name} must not be null")));
    }
    let slice = unsafe { std::slice::from_raw_parts(data, n * dim) };
    PointCloud::new(n, dim, slice.to_vec())
}

/// Exact Wasserstein-2 distance between two row-major n x dim clouds.
///
/// # Safety
/// `a` and `b` must point to n*dim readable f64s; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvfp_dist2_exact(
    a: *const f64,
    b: *const f64,
    n: usize,
    dim: usize,
    out: *mut f64,
) -> DvfpStatus {
    guard(|| {
        nonnull!(out, "out");
        let result = (|| {
            let ca = unsafe { cloud_from_raw(a, n, dim, "a") }?;
            let cb = unsafe { cloud_from_raw(b, n, dim, "b") }?;
            dist2_exact(&ca, &cb)
        })();
        match result {
            Ok(v) => {
                unsafe { *out = v };
                DvfpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Exact squared perturbed-metric distance between two clouds under the
/// form Q(z) = qa |z1|^2 + 2 <z1, z2> + qb |z2|^2 (dim must be even).
///
/// # Safety
/// `a` and `b` must point to n*dim readable f64s; `out_squared` writable.
#[no_mangle]
pub unsafe extern "C" fn dvfp_distq_exact(
    a: *const f64,
    b: *const f64,
    n: usize,
    dim: usize,
    qa: f64,
    qb: f64,
    out_squared: *mut f64,
) -> DvfpStatus {
    guard(|| {
        nonnull!(out_squared, "out_squared");
        let result = (|| {
            if dim % 2 != 0 {
                return Err(Error::InvalidInput(
                    "phase-space dimension must be even".into(),
                ));
            }
            let form = QuadraticForm::new(qa, qb)?;
            let ca = unsafe { cloud_from_raw(a, n, dim, "a") }?;
            let cb = unsafe { cloud_from_raw(b, n, dim, "b") }?;
            distq_exact(&ca, &cb, &form)
        })();
        match result {
            Ok(v) => {
                unsafe { *out_squared = v.squared };
                DvfpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Index-coupled upper bound of the squared perturbed-metric distance.
///
/// # Safety
/// `a` and `b` must point to n*dim readable f64s; `out_squared` writable.
#[no_mangle]
pub unsafe extern "C" fn dvfp_distq_coupled_upper(
    a: *const f64,
    b: *const f64,
    n: usize,
    dim: usize,
    qa: f64,
    qb: f64,
    out_squared: *mut f64,
) -> DvfpStatus {
    guard(|| {
        nonnull!(out_squared, "out_squared");
        let result = (|| {
            if dim % 2 != 0 {
                return Err(Error::InvalidInput(
                    "phase-space dimension must be even".into(),
                ));
            }
            let form = QuadraticForm::new(qa, qb)?;
            let ca = unsafe { cloud_from_raw(a, n, dim, "a") }?;
            let cb = unsafe { cloud_from_raw(b, n, dim, "b") }?;
            distq_coupled_upper(&ca, &cb, &form)
        })();
        match result {
            Ok(v) => {
                unsafe { *out_squared = v.squared };
                DvfpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Opaque drift model handle.
pub struct DvfpModel {
    inner: DriftModel,
}

/// Create a model with A(x) = -alpha x and the linear interaction
/// B(x, xhat) = -coeff (x - xhat) (coeff = 0 for no interaction). Returns
/// null on invalid parameters (message via [`dvfp_last_error_message`]).
/// Free with [`dvfp_model_free`].
#[no_mangle]
pub extern "C" fn dvfp_model_new_linear(
    dimension: usize,
    alpha: f64,
    gamma: f64,
    sigma: f64,
    cutoff: f64,
    coeff: f64,
) -> *mut DvfpModel {
    let interaction = if coeff == 0.0 {
        Interaction::None
    } else {
        Interaction::Linear { coeff }
    };
    match DriftModel::new(
        dimension,
        alpha,
        gamma,
        sigma,
        cutoff,
        Perturbation::None,
        interaction,
    ) {
        Ok(inner) => Box::into_raw(Box::new(DvfpModel { inner })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Destroy a model handle. Passing null is a no-op.
///
/// # Safety
/// `model` must be a pointer returned by `dvfp_model_new_*`, freed once.
#[no_mangle]
pub unsafe extern "C" fn dvfp_model_free(model: *mut DvfpModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// The perturbation size eta = c_g + 2 c_B of a model.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dvfp_model_eta(model: *const DvfpModel) -> f64 {
    if model.is_null() {
        return f64::NAN;
    }
    unsafe { &*model }.inner.eta()
}

/// Evaluate the confining drift A at a point of the model dimension.
///
/// # Safety
/// `x` and `out` must point to `dimension` readable/writable f64s.
#[no_mangle]
pub unsafe extern "C" fn dvfp_model_eval_a(
    model: *const DvfpModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> DvfpStatus {
    guard(|| {
        nonnull!(model, "model");
        nonnull!(x, "x");
        nonnull!(out, "out");
        let model = unsafe { &*model };
        let xs = unsafe { std::slice::from_raw_parts(x, len) };
        match model.inner.eval_a(xs) {
            Ok(a) => {
                let outs = unsafe { std::slice::from_raw_parts_mut(out, len) };
                outs.copy_from_slice(&a);
                DvfpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Run a synchronously coupled pair of ensembles under the model and write
/// the contraction functional trace. The two ensembles start from Gaussian
/// clouds centered at +/- separation/2. `capacity` is the length of both
/// output arrays; the number of recorded points (steps/stride + 1) is
/// written to `out_written` and must fit.
///
/// # Safety
/// `out_times` and `out_j` must point to `capacity` writable f64s;
/// `out_written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvfp_run_coupled_trace(
    model: *const DvfpModel,
    n: usize,
    dt: f64,
    t_final: f64,
    stride: usize,
    seed: u64,
    separation: f64,
    out_times: *mut f64,
    out_j: *mut f64,
    capacity: usize,
    out_written: *mut usize,
) -> DvfpStatus {
    guard(|| {
        nonnull!(model, "model");
        nonnull!(out_times, "out_times");
        nonnull!(out_j, "out_j");
        nonnull!(out_written, "out_written");
        let model = unsafe { &*model };
        let result = (|| {
            let config = SimConfig::new(dt, t_final, n, seed)?
                .with_stride(stride.max(1))
                .with_snapshots(false);
            let expected = config.steps() / config.stride + 1;
            if expected > capacity {
                return Err(Error::InvalidInput(format!(
                    "trace needs {expected} slots, capacity is {capacity}"
                )));
            }
            let form = QuadraticForm::contraction_form(model.inner.friction())?;
            let offset = separation / 2.0;
            let out = run_coupled(
                &config,
                &model.inner,
                gaussian_init(offset, 0.5, 0.0, 0.5),
                gaussian_init(-offset, 0.5, 0.0, 0.5),
                &form,
            )?;
            Ok(out)
        })();
        match result {
            Ok(run) => {
                let times = unsafe { std::slice::from_raw_parts_mut(out_times, capacity) };
                let js = unsafe { std::slice::from_raw_parts_mut(out_j, capacity) };
                times[..run.times.len()].copy_from_slice(&run.times);
                js[..run.j.len()].copy_from_slice(&run.j);
                unsafe { *out_written = run.times.len() };
                DvfpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(dvfp_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn scalar_rates_match_core() {
        let mut w = 0.0;
        assert_eq!(unsafe { dvfp_lambert_w0(1.0, &mut w) }, DvfpStatus::Ok);
        assert_eq!(w, rates::lambert_w0(1.0).unwrap());
        let mut lam = 0.0;
        assert_eq!(
            unsafe { dvfp_halanay_rate(2.0, 1.0, 1.0, &mut lam) },
            DvfpStatus::Ok
        );
        assert_eq!(lam, rates::halanay_rate(2.0, 1.0, 1.0).unwrap());
        let (mut l1, mut l2) = (0.0, 0.0);
        assert_eq!(
            unsafe { dvfp_lambdas(1.0, 0.25, &mut l1, &mut l2) },
            DvfpStatus::Ok
        );
        assert!((l1 - 0.30).abs() < 1e-14);
        assert!((l2 - 0.1125).abs() < 1e-14);
        let mut rate = 0.0;
        assert_eq!(
            unsafe { dvfp_overall_rate(1.0, 0.25, 0.0, &mut rate) },
            DvfpStatus::Ok
        );
        assert!((rate - 0.1875).abs() < 1e-15);
        assert_eq!(dvfp_eta_bar(1.0), rates::eta_bar(1.0));
        assert_eq!(dvfp_hypocoercive_rate(2.0), rates::hypocoercive_rate(2.0));
        assert_eq!(dvfp_optimal_friction(), rates::optimal_friction());
    }

    #[test]
    fn status_codes_and_messages() {
        let mut out = 0.0;
        assert_eq!(
            unsafe { dvfp_lambert_w0(-1.0, &mut out) },
            DvfpStatus::OutOfValidity
        );
        let msg = unsafe { CStr::from_ptr(dvfp_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("principal branch"));
        assert_eq!(
            unsafe { dvfp_lambdas(1.0, 0.9, &mut out, &mut out) },
            DvfpStatus::OutOfValidity
        );
        assert_eq!(
            unsafe { dvfp_halanay_rate(1.0, 2.0, 1.0, &mut out) },
            DvfpStatus::NumericalFailure
        );
        assert_eq!(
            unsafe { dvfp_lambert_w0(1.0, std::ptr::null_mut()) },
            DvfpStatus::InvalidArgument
        );
    }

    #[test]
    fn kummer_functions_match_core() {
        let mut m = 0.0;
        assert_eq!(unsafe { dvfp_kummer_m(0.5, 2.0, &mut m) }, DvfpStatus::Ok);
        assert_eq!(m, kummer::kummer_m(0.5, 2.0).unwrap());
        let mut phi = 0.0;
        assert_eq!(
            unsafe { dvfp_phi_infinite_delay(1.0, 0.5, 1.0, 1.0, 5.0, &mut phi) },
            DvfpStatus::Ok
        );
        let p = KummerParams::new(1.0, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(phi, kummer::phi_infinite_delay(&p, 5.0).unwrap());
        assert_eq!(
            unsafe { dvfp_phi_infinite_delay(1.0, 1.5, 1.0, 1.0, 5.0, &mut phi) },
            DvfpStatus::OutOfValidity
        );
    }

    #[test]
    fn distances_match_core() {
        let a = [0.0, 0.0, 1.0, 0.0];
        let b = [1.0, 0.0, 0.0, 1.0];
        let mut w2 = 0.0;
        assert_eq!(
            unsafe { dvfp_dist2_exact(a.as_ptr(), b.as_ptr(), 2, 2, &mut w2) },
            DvfpStatus::Ok
        );
        let ca = PointCloud::new(2, 2, a.to_vec()).unwrap();
        let cb = PointCloud::new(2, 2, b.to_vec()).unwrap();
        assert_eq!(w2, dist2_exact(&ca, &cb).unwrap());
        let mut dq = 0.0;
        assert_eq!(
            unsafe { dvfp_distq_exact(a.as_ptr(), b.as_ptr(), 2, 2, 2.0, 2.0, &mut dq) },
            DvfpStatus::Ok
        );
        let form = QuadraticForm::new(2.0, 2.0).unwrap();
        assert_eq!(dq, distq_exact(&ca, &cb, &form).unwrap().squared);
        let mut upper = 0.0;
        assert_eq!(
            unsafe {
                dvfp_distq_coupled_upper(a.as_ptr(), b.as_ptr(), 2, 2, 2.0, 2.0, &mut upper)
            },
            DvfpStatus::Ok
        );
        assert!(upper >= dq - 1e-15);
        // Odd phase dimension is rejected.
        assert_eq!(
            unsafe { dvfp_distq_exact(a.as_ptr(), b.as_ptr(), 2, 1, 2.0, 2.0, &mut dq) },
            DvfpStatus::InvalidArgument
        );
    }

    #[test]
    fn model_handle_lifecycle() {
        let model = dvfp_model_new_linear(1, 1.0, 1.0, 0.25, 1.0, 0.125);
        assert!(!model.is_null());
        assert_eq!(unsafe { dvfp_model_eta(model) }, 0.25);
        let x = [2.0];
        let mut a = [0.0];
        assert_eq!(
            unsafe { dvfp_model_eval_a(model, x.as_ptr(), 1, a.as_mut_ptr()) },
            DvfpStatus::Ok
        );
        assert_eq!(a[0], -2.0);
        unsafe { dvfp_model_free(model) };
        // Invalid parameters give null plus a message.
        let bad = dvfp_model_new_linear(0, 1.0, 1.0, 0.25, 1.0, 0.0);
        assert!(bad.is_null());
        let msg = unsafe { CStr::from_ptr(dvfp_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("dimension"));
        unsafe { dvfp_model_free(std::ptr::null_mut()) };
    }

    #[test]
    fn coupled_trace_runs_and_decays() {
        let model = dvfp_model_new_linear(1, 1.0, 1.0, 0.25, 0.0, 0.125);
        assert!(!model.is_null());
        let capacity = 2001;
        let mut times = vec![0.0; capacity];
        let mut j = vec![0.0; capacity];
        let mut written = 0usize;
        let status = unsafe {
            dvfp_run_coupled_trace(
                model,
                200,
                1e-2,
                10.0,
                1,
                7,
                2.0,
                times.as_mut_ptr(),
                j.as_mut_ptr(),
                capacity,
                &mut written,
            )
        };
        assert_eq!(status, DvfpStatus::Ok);
        assert_eq!(written, 1001);
        assert!(j[0] > 0.0);
        assert!(j[written - 1] < 0.05 * j[0], "J must contract");
        // Capacity shortfall is an argument error.
        let status = unsafe {
            dvfp_run_coupled_trace(
                model,
                200,
                1e-2,
                10.0,
                1,
                7,
                2.0,
                times.as_mut_ptr(),
                j.as_mut_ptr(),
                10,
                &mut written,
            )
        };
        assert_eq!(status, DvfpStatus::InvalidArgument);
        unsafe { dvfp_model_free(model) };
    }
}
