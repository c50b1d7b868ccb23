use std::f64::consts::PI;
use std::ffi::CStr;
use std::ptr;

use homfluct_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(hf_last_error_message()) }.to_string_lossy().into_owned()
}

fn gaussian(dim: usize) -> *mut HfSpectrum {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { hf_spectrum_gaussian(dim, 1.0, 1.0, &mut s) }, HfStatus::HfOk);
    s
}

#[test]
fn sigma2_and_covariance_match_closed_forms() {
    let s = gaussian(3);
    let mut v = 0.0;
    unsafe {
        assert_eq!(hf_sigma2(s, &mut v), HfStatus::HfOk);
        assert!((v - 2.0 * (PI / 2.0).sqrt() / (PI * PI)).abs() < 1e-9);
        let x = [0.5, 0.0, 0.0];
        assert_eq!(hf_covariance(s, x.as_ptr(), 3, &mut v), HfStatus::HfOk);
        let exact = (2.0 * PI).powf(-1.5) * (-0.125f64).exp();
        assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
        hf_spectrum_free(s);
    }
}

#[test]
fn corrector_quantities_are_positive_and_ordered() {
    let s = gaussian(3);
    let (mut a, mut b, mut g) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(hf_corrector_variance(s, 1e-2, &mut a), HfStatus::HfOk);
        assert_eq!(hf_corrector_variance(s, 1e-4, &mut b), HfStatus::HfOk);
        assert_eq!(hf_sigma_lambda2(s, 1e-4, &mut g), HfStatus::HfOk);
        hf_spectrum_free(s);
    }
    assert!(0.0 < a && a < b && g > 0.0);
}

#[test]
fn field_handle_round_trip() {
    let s = gaussian(3);
    let mut f = ptr::null_mut();
    let x = [0.1, 0.2, 0.3];
    let (mut v1, mut v2) = (0.0, 0.0);
    unsafe {
        assert_eq!(hf_field_gaussian(s, 64, 9, &mut f), HfStatus::HfOk);
        assert_eq!(hf_field_eval(f, x.as_ptr(), 3, &mut v1), HfStatus::HfOk);
        assert_eq!(hf_field_eval(f, x.as_ptr(), 3, &mut v2), HfStatus::HfOk);
        assert_eq!(hf_field_eval(f, x.as_ptr(), 2, &mut v2), HfStatus::HfDimension);
        hf_field_free(f);
        assert_eq!(hf_field_poisson(3, 1.0, 1.0, 9, &mut f), HfStatus::HfOk);
        assert_eq!(hf_field_eval(f, x.as_ptr(), 3, &mut v2), HfStatus::HfOk);
        hf_field_free(f);
        hf_spectrum_free(s);
    }
    assert!(v1.is_finite() && v2.is_finite());
}

#[test]
fn u_hom_and_variances() {
    let s = gaussian(3);
    let mut ic = ptr::null_mut();
    let x = [0.0; 3];
    let (mut u, mut ve, mut vl, mut s2) = (0.0, 0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(hf_initial_constant(1.0, &mut ic), HfStatus::HfOk);
        assert_eq!(hf_sigma2(s, &mut s2), HfStatus::HfOk);
        assert_eq!(hf_u_hom(s, ic, 1.0, x.as_ptr(), 3, &mut u), HfStatus::HfOk);
        assert_eq!(hf_var_eps(s, ic, 1.0, x.as_ptr(), 3, 0.1, &mut ve), HfStatus::HfOk);
        assert_eq!(hf_var_limit(s, ic, 1.0, x.as_ptr(), 3, &mut vl), HfStatus::HfOk);
        hf_initial_free(ic);
        hf_spectrum_free(s);
    }
    assert!((u - (-0.5 * s2).exp()).abs() < 1e-12);
    let exact_limit = (-s2).exp() * (2.0 * PI).powf(-1.5) * 4.0 * (2.0 - 2f64.sqrt());
    assert!((vl - exact_limit).abs() < 1e-6 * exact_limit, "{vl} vs {exact_limit}");
    assert!(0.0 < ve && ve < vl);
}

#[test]
fn green_function_in_three_dimensions() {
    let x = [1.0, 0.0, 0.0];
    let mut g = 0.0;
    assert_eq!(unsafe { hf_green_lambda(x.as_ptr(), 3, 0.5, &mut g) }, HfStatus::HfOk);
    // (λ − ½Δ)⁻¹ kernel: e^{-√(2λ)r}/(2πr)
    assert!((g - (-1.0f64).exp() / (2.0 * PI)).abs() < 1e-9, "{g}");
    assert_eq!(unsafe { hf_green_lambda([0.0; 3].as_ptr(), 3, 0.5, &mut g) }, HfStatus::HfInvalidParameter);
    assert!(last_error().contains("singular"));
}

#[test]
fn u_eps_estimate_with_zero_potential_is_one() {
    let mut s = ptr::null_mut();
    let (mut f, mut ic) = (ptr::null_mut(), ptr::null_mut());
    let (mut re, mut im, mut ci) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(hf_spectrum_gaussian(3, 0.0, 1.0, &mut s), HfStatus::HfOk);
        assert_eq!(hf_field_gaussian(s, 8, 1, &mut f), HfStatus::HfOk);
        assert_eq!(hf_initial_constant(1.0, &mut ic), HfStatus::HfOk);
        let x = [0.0; 3];
        let st = hf_u_eps_estimate(f, ic, 1.0, x.as_ptr(), 3, 0.3, 16, 0.05, 2, &mut re, &mut im, &mut ci);
        assert_eq!(st, HfStatus::HfOk);
        hf_initial_free(ic);
        hf_field_free(f);
        hf_spectrum_free(s);
    }
    assert_eq!((re, im, ci), (1.0, 0.0, 0.0));
}

#[test]
fn errors_map_to_status_codes() {
    let mut s = ptr::null_mut();
    let mut v = 0.0;
    unsafe {
        assert_eq!(hf_spectrum_gaussian(3, -1.0, 1.0, &mut s), HfStatus::HfInvalidParameter);
        assert!(!last_error().is_empty());
        assert_eq!(hf_spectrum_gaussian(2, 1.0, 1.0, &mut s), HfStatus::HfDimension);
        assert_eq!(hf_sigma2(ptr::null(), &mut v), HfStatus::HfNullPointer);
        assert!(last_error().contains("spec"));
        let g = gaussian(3);
        assert_eq!(hf_sigma2(g, ptr::null_mut()), HfStatus::HfNullPointer);
        let mut ic = ptr::null_mut();
        assert_eq!(hf_initial_constant(1.0, &mut ic), HfStatus::HfOk);
        let x = [0.0; 4];
        assert_eq!(hf_var_eps(g, ic, 1.0, x.as_ptr(), 4, 0.1, &mut v), HfStatus::HfDimension);
        hf_initial_free(ic);
        hf_spectrum_free(g);
        hf_spectrum_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/homfluct.h")).unwrap();
    for name in [
        "hf_last_error_message",
        "hf_spectrum_gaussian",
        "hf_spectrum_poisson",
        "hf_spectrum_free",
        "hf_sigma2",
        "hf_covariance",
        "hf_corrector_variance",
        "hf_sigma_lambda2",
        "hf_field_gaussian",
        "hf_field_poisson",
        "hf_field_eval",
        "hf_field_free",
        "hf_initial_constant",
        "hf_initial_bump",
        "hf_initial_free",
        "hf_u_hom",
        "hf_green_lambda",
        "hf_var_eps",
        "hf_var_limit",
        "hf_u_eps_estimate",
        "HF_NULL_POINTER",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/homfluct.h"))
        .output()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
