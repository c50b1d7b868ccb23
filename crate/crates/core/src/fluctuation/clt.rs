//! Distribution tests for the rescaled fluctuations.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::PI;

use super::rates::{Potential, PotentialKind};
use super::stats::{correlation, ks_pvalue, ks_statistic, moments, normal_cdf};
use crate::corrector::{corrector_variance, CorrectorEvaluator, STATIONARY_LAMBDA};
use crate::error::{invalid, Error, Result};
use crate::feynman_kac::{u_eps_inner_controlled, v_eps_inner_controlled};
use crate::homogenization::{sigma2, HomogenizedModel, InitialCondition};
use crate::parallel::draw_blocks;
use crate::random_field::ModeScratch;
use crate::rng;

/// Outcome of a one-sample KS test against a centered normal law.
#[derive(Debug, Clone, PartialEq)]
pub struct DistTestResult {
    pub n: usize,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub target: String,
    pub target_variance: f64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Mean of the real parts and its standard error (null check for the
    /// purely imaginary limit; zero for real samples).
    pub re_mean: f64,
    pub re_std_err: f64,
    pub re_null_ok: bool,
}

impl DistTestResult {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level && self.re_null_ok
    }
}

/// KS test of real samples against `N(0, variance)`.
pub fn ks_normal_test(xs: &[f64], variance: f64, target: impl Into<String>) -> Result<DistTestResult> {
    if !(variance.is_finite() && variance >= 0.0) {
        return Err(invalid("variance", "must be finite and >= 0"));
    }
    if xs.is_empty() {
        return Err(invalid("samples", "no samples"));
    }
    let ks = ks_statistic(xs, |x| normal_cdf(x, variance));
    let m = moments(xs);
    Ok(DistTestResult {
        n: xs.len(),
        ks_statistic: ks,
        p_value: ks_pvalue(xs.len(), ks),
        target: target.into(),
        target_variance: variance,
        mean: m.mean,
        variance: m.variance,
        skewness: m.skewness,
        re_mean: 0.0,
        re_std_err: 0.0,
        re_null_ok: true,
    })
}

/// `N` draws of `i·Z`, `Z ~ N(0, var)`.
pub fn sample_limit_v(var: f64, n: usize, seed: u64) -> Result<Vec<Complex64>> {
    if !(var.is_finite() && var >= 0.0) {
        return Err(invalid("var", "must be finite and >= 0"));
    }
    let sd = var.sqrt();
    Ok(draw_blocks(n, &[seed, rng::tag::SAMPLE], |g| {
        let z: f64 = StandardNormal.sample(g);
        Complex64::new(0.0, sd * z)
    }))
}

/// KS test of `Im(samples)` against `N(0, var)` plus `|mean Re| ≤ 4·stderr`.
pub fn clt_test_d3(samples: &[Complex64], var: f64) -> Result<DistTestResult> {
    if samples.len() < 100 {
        return Err(invalid("samples", format!("need at least 100 samples, got {}", samples.len())));
    }
    let im: Vec<f64> = samples.iter().map(|z| z.im).collect();
    let re: Vec<f64> = samples.iter().map(|z| z.re).collect();
    let mut r = ks_normal_test(&im, var, format!("N(0, {var:.6e}) for Im"))?;
    let mr = moments(&re);
    r.re_mean = mr.mean;
    r.re_std_err = (mr.variance / re.len() as f64).sqrt();
    r.re_null_ok = mr.mean.abs() <= 4.0 * r.re_std_err;
    Ok(r)
}

/// Fraction of `trials` independent self-sample tests rejected at `level`.
pub fn clt_self_calibration(var: f64, n: usize, trials: usize, level: f64, seed: u64) -> Result<f64> {
    let mut rejected = 0usize;
    for k in 0..trials as u64 {
        let s = sample_limit_v(var, n, rng::mix(&[seed, k]))?;
        if !clt_test_d3(&s, var)?.passes(level) {
            rejected += 1;
        }
    }
    Ok(rejected as f64 / trials as f64)
}

/// Realization-level estimates of `v_ε(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VEnsemble {
    pub samples: Vec<Complex64>,
    /// Mean over realizations of the inner estimator variance (per-path
    /// variance divided by `n_paths`); the part of the ensemble spread that
    /// is Monte Carlo noise.
    pub inner_noise: f64,
    pub n_paths: usize,
    pub sigma2: f64,
}

impl VEnsemble {
    /// Variance of `Im v_ε` over realizations, inner noise removed.
    pub fn corrected_variance(&self) -> f64 {
        let im: Vec<f64> = self.samples.iter().map(|z| z.im).collect();
        moments(&im).variance - self.inner_noise
    }
}

/// `v_ε(t, x)` for `n_omega` realizations, each with `n_paths` inner paths
/// and physical step `dt` (default `(εℓ)²/10`). Gaussian fields use the
/// path integral of `V` as a control variate with exact mean.
#[allow(clippy::too_many_arguments)]
pub fn v_eps_ensemble(
    potential: &Potential,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    n_omega: usize,
    n_paths: usize,
    dt: Option<f64>,
    seed: u64,
) -> Result<VEnsemble> {
    if n_omega < 2 || n_paths < 2 {
        return Err(invalid("n_omega", "need at least two realizations and two paths"));
    }
    let s2 = sigma2(potential.spectrum())?;
    let l = potential.spectrum().correlation_length();
    let dt = dt.unwrap_or((eps * l).powi(2) / 10.0);
    let out: Vec<Result<(Complex64, f64)>> = (0..n_omega as u64)
        .into_par_iter()
        .map_init(ModeScratch::default, |s, w| {
            let field = potential.realize_indexed(seed, w)?;
            let ps = rng::mix(&[seed, rng::tag::PATH, w]);
            let (im, noise) = v_eps_inner_controlled(&field, f, t, x, eps, s2, n_paths, dt, ps, s)?;
            Ok((Complex64::new(0.0, im), noise))
        })
        .collect();
    let out: Vec<(Complex64, f64)> = out.into_iter().collect::<Result<_>>()?;
    Ok(VEnsemble {
        inner_noise: out.iter().map(|p| p.1).sum::<f64>() / n_omega as f64,
        samples: out.into_iter().map(|p| p.0).collect(),
        n_paths,
        sigma2: s2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct D4CltRow {
    pub eps: f64,
    pub lambda: f64,
    /// Sample variance of `Φ_{ε²}(0)/|log ε|^{1/2}`.
    pub sample_variance: f64,
    /// `⟨Φ_λ, Φ_λ⟩/|log ε|` by quadrature.
    pub quadrature_variance: f64,
    /// `⟨Φ_λ, Φ_λ⟩/|log λ|`, the ratio whose λ → 0 limit is tabulated by
    /// `corrector::d4_log_asymptotics`.
    pub log_lambda_ratio: f64,
    /// KS against `N(0, quadrature_variance)`.
    pub test: DistTestResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct D4CltResult {
    pub rows: Vec<D4CltRow>,
    /// `4R̂(0)/(2π)^4`, the variance stated for the limit law.
    pub stated_variance: f64,
    /// `2|S³|(2π)^{-4}R̂(0) = R̂(0)/(2π²)`, the λ → 0 limit of the
    /// quadrature variance with the sphere area kept.
    pub asymptotic_variance: f64,
    /// Samples at the smallest ε tested against `stated_variance`.
    pub stated_test: DistTestResult,
    /// The same samples tested against `asymptotic_variance`.
    pub asymptotic_test: DistTestResult,
}

/// Ensemble of `Φ_{ε²}(0)/|log ε|^{1/2}` in d = 4 over `n` realizations.
pub fn d4_corrector_clt(potential: &Potential, eps_list: &[f64], n: usize, seed: u64) -> Result<D4CltResult> {
    let d = potential.dim();
    if d != 4 {
        return Err(Error::Dimension { dim: d, reason: "the logarithmic corrector scaling is specific to d = 4".into() });
    }
    if eps_list.is_empty() || eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(invalid("eps_list", "entries must lie in (0, 1)"));
    }
    if n < 2 {
        return Err(invalid("n", "need at least two realizations"));
    }
    let spec = potential.spectrum();
    let r0 = spec.at_origin();
    let mut rows = Vec::new();
    let mut last: Option<(f64, Vec<f64>)> = None;
    for &eps in eps_list {
        let lambda = eps * eps;
        let scale = eps.ln().abs().sqrt();
        let xs: Vec<Result<f64>> = (0..n as u64)
            .into_par_iter()
            .map(|w| {
                let field = potential.realize_indexed(seed, w)?;
                let ev = CorrectorEvaluator::new(&field, lambda)?;
                Ok(ev.value(&[0.0; 4]) / scale)
            })
            .collect();
        let xs: Vec<f64> = xs.into_iter().collect::<Result<_>>()?;
        let norm = corrector_variance(spec, lambda)?;
        let qv = norm / eps.ln().abs();
        let test = ks_normal_test(&xs, qv, format!("N(0, {qv:.6e})"))?;
        rows.push(D4CltRow {
            eps,
            lambda,
            sample_variance: moments(&xs).variance,
            quadrature_variance: qv,
            log_lambda_ratio: norm / lambda.ln().abs(),
            test,
        });
        if last.as_ref().is_none_or(|(e, _)| eps < *e) {
            last = Some((eps, xs));
        }
    }
    let xs = last.map(|p| p.1).unwrap_or_default();
    let stated = 4.0 * r0 / (2.0 * PI).powi(4);
    let asym = r0 / (2.0 * PI * PI);
    Ok(D4CltResult {
        rows,
        stated_variance: stated,
        asymptotic_variance: asym,
        stated_test: ks_normal_test(&xs, stated, format!("N(0, {stated:.6e})"))?,
        asymptotic_test: ks_normal_test(&xs, asym, format!("N(0, {asym:.6e})"))?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct D5Row {
    pub eps: f64,
    /// Correlation of `Im((u_ε − u_hom)/ε)` with `u_hom·Φ(x/ε)`; `None`
    /// when either sample is constant.
    pub correlation: Option<f64>,
    /// `E|u_ε − u_hom − iε u_hom Φ(x/ε)|`
    pub residual_l1: f64,
    pub residual_over_eps: f64,
    pub mean_abs_err: f64,
}

/// First-order expansion check in d ≥ 5 for Gaussian potentials.
#[allow(clippy::too_many_arguments)]
pub fn d5_expansion_check(
    potential: &Potential,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps_list: &[f64],
    n_omega: usize,
    n_paths: usize,
    dt: Option<f64>,
    seed: u64,
) -> Result<Vec<D5Row>> {
    let d = potential.dim();
    if d < 5 {
        return Err(Error::Dimension { dim: d, reason: "the stationary corrector expansion needs d >= 5".into() });
    }
    if !matches!(potential.kind(), PotentialKind::Gaussian { .. }) {
        return Err(invalid("potential.kind", "the expansion check is implemented for Gaussian potentials only"));
    }
    if x.len() != d {
        return Err(invalid("x", format!("expected {d} coordinates")));
    }
    if n_omega < 2 || n_paths < 2 {
        return Err(invalid("n_omega", "need at least two realizations and two paths"));
    }
    let model = HomogenizedModel::new(potential.spectrum(), f.clone())?;
    let uh = model.value(t, x);
    let dt = dt.unwrap_or_else(|| potential.default_dt());
    let mut rows = Vec::new();
    for &eps in eps_list {
        crate::error::ensure_positive("eps", eps)?;
        let key = eps.to_bits();
        let y: Vec<f64> = x.iter().map(|v| v / eps).collect();
        let per: Vec<Result<(f64, f64, f64, f64)>> = (0..n_omega as u64)
            .into_par_iter()
            .map_init(ModeScratch::default, |s, w| {
                let field = potential.realize_indexed(seed, w)?;
                let ps = rng::mix(&[seed, rng::tag::PATH, key, w]);
                let (u, _) = u_eps_inner_controlled(&field, f, t, x, eps, n_paths, dt, ps, s)?;
                let phi = CorrectorEvaluator::new(&field, STATIONARY_LAMBDA)?.value(&y);
                let resid = (u - uh - Complex64::new(0.0, eps * uh * phi)).norm();
                Ok((((u - uh) / eps).im, uh * phi, resid, (u - uh).norm()))
            })
            .collect();
        let per: Vec<(f64, f64, f64, f64)> = per.into_iter().collect::<Result<_>>()?;
        let a: Vec<f64> = per.iter().map(|p| p.0).collect();
        let b: Vec<f64> = per.iter().map(|p| p.1).collect();
        let n = per.len() as f64;
        let residual_l1 = per.iter().map(|p| p.2).sum::<f64>() / n;
        rows.push(D5Row {
            eps,
            correlation: correlation(&a, &b),
            residual_l1,
            residual_over_eps: residual_l1 / eps,
            mean_abs_err: per.iter().map(|p| p.3).sum::<f64>() / n,
        });
    }
    Ok(rows)
}
