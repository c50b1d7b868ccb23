//! C ABI over the homfluct toolkit.
//!
//! Every function returns an [`HfStatus`]; results go through out-pointers.
//! Objects are opaque handles released with the matching `*_free`. On a
//! non-`HF_OK` status, `hf_last_error_message` describes the failure for the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use homfluct::feynman_kac::u_eps_estimate;
use homfluct::fluctuation::{var_eps, var_limit};
use homfluct::homogenization::{green_lambda, sigma2, HomogenizedModel, InitialCondition};
use homfluct::random_field::{covariance, make_gaussian_field, make_poisson_field, FieldRealization, ShapeFunction, SpectrumModel};
use homfluct::{corrector, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfStatus {
    HfOk = 0,
    HfInvalidParameter = 1,
    HfDimension = 2,
    HfQuadrature = 3,
    HfConfig = 4,
    HfInvalidRun = 5,
    HfIo = 6,
    HfNullPointer = 7,
    HfPanic = 8,
}

/// Covariance spectrum of a stationary potential.
pub struct HfSpectrum(SpectrumModel);

/// One realization of the random potential.
pub struct HfField(FieldRealization);

/// Initial condition `f`.
pub struct HfInitial(InitialCondition);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HfStatus {
    match e {
        Error::InvalidParameter { .. } => HfStatus::HfInvalidParameter,
        Error::Dimension { .. } => HfStatus::HfDimension,
        Error::Quadrature(_) => HfStatus::HfQuadrature,
        Error::Config { .. } => HfStatus::HfConfig,
        Error::InvalidRun(_) => HfStatus::HfInvalidRun,
        Error::Io(_) | Error::Json(_) => HfStatus::HfIo,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), HfStatusError>) -> HfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HfStatus::HfOk,
        Ok(Err(HfStatusError::Core(e))) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Ok(Err(HfStatusError::Null(name))) => {
            set_error(format!("null pointer passed for `{name}`"));
            HfStatus::HfNullPointer
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HfStatus::HfPanic
        }
    }
}

enum HfStatusError {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for HfStatusError {
    fn from(e: Error) -> Self {
        HfStatusError::Core(e)
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, HfStatusError> {
    p.as_ref().ok_or(HfStatusError::Null(name))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], HfStatusError> {
    if p.is_null() {
        return Err(HfStatusError::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write<T>(out: *mut T, v: T, name: &'static str) -> Result<(), HfStatusError> {
    if out.is_null() {
        return Err(HfStatusError::Null(name));
    }
    out.write(v);
    Ok(())
}

unsafe fn write_handle<T>(out: *mut *mut T, v: T) -> Result<(), HfStatusError> {
    write(out, Box::into_raw(Box::new(v)), "out")
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread; empty when none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Gaussian-bump spectrum `A·exp(-|ξ|²/(2ρ²))` in `dim` dimensions.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn hf_spectrum_gaussian(dim: usize, amplitude: f64, width: f64, out: *mut *mut HfSpectrum) -> HfStatus {
    guard(|| write_handle(out, HfSpectrum(SpectrumModel::gaussian_bump(dim, amplitude, width)?)))
}

/// Spectrum induced by shot noise with a bump shape of radius `radius`
/// scaled by `scale`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn hf_spectrum_poisson(dim: usize, radius: f64, scale: f64, out: *mut *mut HfSpectrum) -> HfStatus {
    guard(|| {
        let shape = ShapeFunction::new(dim, radius, scale)?;
        write_handle(out, HfSpectrum(SpectrumModel::poisson_induced(shape)?))
    })
}

/// # Safety
/// `spec` must come from an `hf_spectrum_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn hf_spectrum_free(spec: *mut HfSpectrum) {
    free(spec)
}

/// Effective potential strength `σ²`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hf_sigma2(spec: *const HfSpectrum, out: *mut f64) -> HfStatus {
    guard(|| write(out, sigma2(&borrow(spec, "spec")?.0)?, "out"))
}

/// Covariance `R(x)`; `x` holds the spectrum dimension's coordinates.
///
/// # Safety
/// `x` must point to `dim` doubles, `dim` equal to the spectrum dimension.
#[no_mangle]
pub unsafe extern "C" fn hf_covariance(spec: *const HfSpectrum, x: *const f64, dim: usize, out: *mut f64) -> HfStatus {
    guard(|| {
        let s = &borrow(spec, "spec")?.0;
        check_dim(s.dim(), dim)?;
        write(out, covariance(s, slice(x, dim, "x")?), "out")
    })
}

/// `⟨Φ_λ, Φ_λ⟩`, the corrector variance.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hf_corrector_variance(spec: *const HfSpectrum, lambda: f64, out: *mut f64) -> HfStatus {
    guard(|| write(out, corrector::corrector_variance(&borrow(spec, "spec")?.0, lambda)?, "out"))
}

/// `σ_λ² = E|∇Φ_λ|²`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hf_sigma_lambda2(spec: *const HfSpectrum, lambda: f64, out: *mut f64) -> HfStatus {
    guard(|| write(out, corrector::sigma_lambda2(&borrow(spec, "spec")?.0, lambda)?, "out"))
}

fn check_dim(expected: usize, got: usize) -> Result<(), HfStatusError> {
    if expected != got {
        return Err(Error::Dimension { dim: got, reason: format!("expected {expected} coordinates") }.into());
    }
    Ok(())
}

/// Gaussian field with `modes` spectral modes drawn from `seed`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hf_field_gaussian(spec: *const HfSpectrum, modes: usize, seed: u64, out: *mut *mut HfField) -> HfStatus {
    guard(|| write_handle(out, HfField(make_gaussian_field(&borrow(spec, "spec")?.0, modes, seed)?.into())))
}

/// Unit-intensity shot-noise field with a bump shape.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn hf_field_poisson(dim: usize, radius: f64, scale: f64, seed: u64, out: *mut *mut HfField) -> HfStatus {
    guard(|| {
        let shape = ShapeFunction::new(dim, radius, scale)?;
        write_handle(out, HfField(make_poisson_field(&shape, seed)?.into()))
    })
}

/// `V(x)` for one realization.
///
/// # Safety
/// `x` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_field_eval(field: *const HfField, x: *const f64, dim: usize, out: *mut f64) -> HfStatus {
    guard(|| {
        let f = &borrow(field, "field")?.0;
        check_dim(f.dim(), dim)?;
        write(out, f.value(slice(x, dim, "x")?), "out")
    })
}

/// # Safety
/// `field` must come from an `hf_field_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn hf_field_free(field: *mut HfField) {
    free(field)
}

/// `f ≡ value`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn hf_initial_constant(value: f64, out: *mut *mut HfInitial) -> HfStatus {
    guard(|| {
        let ic = InitialCondition::Constant { value };
        ic.validate(3)?;
        write_handle(out, HfInitial(ic))
    })
}

/// `f(x) = height·exp(-|x−center|²/(2·width²))`.
///
/// # Safety
/// `center` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_initial_bump(
    center: *const f64,
    dim: usize,
    width: f64,
    height: f64,
    out: *mut *mut HfInitial,
) -> HfStatus {
    guard(|| {
        let ic = InitialCondition::GaussianBump { center: slice(center, dim, "center")?.to_vec(), width, height };
        ic.validate(dim)?;
        write_handle(out, HfInitial(ic))
    })
}

/// # Safety
/// `initial` must come from an `hf_initial_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn hf_initial_free(initial: *mut HfInitial) {
    free(initial)
}

/// Homogenized solution `u_hom(t, x)`.
///
/// # Safety
/// `x` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_u_hom(
    spec: *const HfSpectrum,
    initial: *const HfInitial,
    t: f64,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> HfStatus {
    guard(|| {
        let s = &borrow(spec, "spec")?.0;
        check_dim(s.dim(), dim)?;
        let model = HomogenizedModel::new(s, borrow(initial, "initial")?.0.clone())?;
        write(out, homfluct::homogenization::u_hom(&model, t, slice(x, dim, "x")?)?, "out")
    })
}

/// Green's function of `λ − ½Δ` at `x ≠ 0`.
///
/// # Safety
/// `x` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_green_lambda(x: *const f64, dim: usize, lambda: f64, out: *mut f64) -> HfStatus {
    guard(|| write(out, green_lambda(slice(x, dim, "x")?, lambda, dim)?, "out"))
}

/// Variance of `v_ε(t, x)` at finite `ε` (d = 3).
///
/// # Safety
/// `x` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_var_eps(
    spec: *const HfSpectrum,
    initial: *const HfInitial,
    t: f64,
    x: *const f64,
    dim: usize,
    eps: f64,
    out: *mut f64,
) -> HfStatus {
    guard(|| {
        let s = &borrow(spec, "spec")?.0;
        check_dim(s.dim(), dim)?;
        let v = var_eps(s, &borrow(initial, "initial")?.0, t, slice(x, dim, "x")?, sigma2(s)?, eps)?;
        write(out, v, "out")
    })
}

/// Variance of the limit `v(t, x)` (d = 3).
///
/// # Safety
/// `x` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_var_limit(
    spec: *const HfSpectrum,
    initial: *const HfInitial,
    t: f64,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> HfStatus {
    guard(|| {
        let s = &borrow(spec, "spec")?.0;
        check_dim(s.dim(), dim)?;
        let v = var_limit(s, &borrow(initial, "initial")?.0, t, slice(x, dim, "x")?, sigma2(s)?)?;
        write(out, v, "out")
    })
}

/// Feynman-Kac estimate of `u_ε(t, x)` for one realization: writes the
/// real and imaginary parts and the 95% half-width.
///
/// # Safety
/// `x` must point to `dim` doubles; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hf_u_eps_estimate(
    field: *const HfField,
    initial: *const HfInitial,
    t: f64,
    x: *const f64,
    dim: usize,
    eps: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
    out_re: *mut f64,
    out_im: *mut f64,
    out_ci: *mut f64,
) -> HfStatus {
    guard(|| {
        let f = &borrow(field, "field")?.0;
        check_dim(f.dim(), dim)?;
        if out_re.is_null() || out_im.is_null() || out_ci.is_null() {
            return Err(HfStatusError::Null("out"));
        }
        let e = u_eps_estimate(f, &borrow(initial, "initial")?.0, t, slice(x, dim, "x")?, eps, n_paths, dt, seed)?;
        let m = e.mean();
        write(out_re, m.re, "out_re")?;
        write(out_im, m.im, "out_im")?;
        write(out_ci, e.ci(), "out_ci")
    })
}
