use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::path::{step_count, BrownianPath};
use super::MCEstimate;
use crate::corrector::{sigma_lambda2, CorrectorEvaluator};
use crate::error::{ensure_positive, invalid, Error, Result};
use crate::homogenization::InitialCondition;
use crate::random_field::{FieldRealization, GaussianField, ModeScratch};
use crate::rng;

/// Seed of the `i`-th inner path under a master seed.
pub fn path_seed(seed: u64, i: u64) -> u64 {
    rng::mix(&[seed, rng::tag::PATH, i])
}

fn check_common(field: &FieldRealization, f: &InitialCondition, t: f64, x: &[f64], eps: f64, dt: f64) -> Result<()> {
    ensure_positive("t", t)?;
    ensure_positive("eps", eps)?;
    ensure_positive("dt", dt)?;
    if x.len() != field.dim() {
        return Err(invalid("x", format!("expected {} coordinates", field.dim())));
    }
    f.validate(field.dim())
}

/// One Feynman-Kac sample `f(x + εB_T)·exp(iε∫_0^T V(x/ε + B_s)ds)`, `T = t/ε²`,
/// with the path drawn from `path_seed`.
pub(crate) fn u_eps_sample(
    field: &FieldRealization,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    dt: f64,
    seed: u64,
    scratch: &mut ModeScratch,
) -> Complex64 {
    let (w, phase) = u_eps_parts(field, f, t, x, eps, dt, seed, scratch);
    Complex64::from_polar(w, phase)
}

/// `(f(x+B_t), ε ∫_0^{t/ε²} V(y_s) ds)` for one fast-scale path.
#[allow(clippy::too_many_arguments)]
#[allow(clippy::too_many_arguments)]
fn u_eps_parts(
    field: &FieldRealization,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    dt: f64,
    seed: u64,
    scratch: &mut ModeScratch,
) -> (f64, f64) {
    let steps = step_count(t / (eps * eps), dt);
    let mut g = rng::stream(&[seed, rng::tag::PATH]);
    let sd = dt.sqrt();
    let mut y: Vec<f64> = x.iter().map(|v| v / eps).collect();
    let mut v0 = field.value_with(&y, scratch);
    let mut integral = 0.0;
    for _ in 0..steps {
        for yk in y.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut g);
            *yk += sd * z;
        }
        let v1 = field.value_with(&y, scratch);
        integral += 0.5 * (v0 + v1);
        v0 = v1;
    }
    let end: Vec<f64> = y.iter().map(|v| eps * v).collect();
    (f.value(&end), eps * integral * dt)
}

/// Inner Monte Carlo estimate of `u_ε(t, x)` for one frozen realization.
#[allow(clippy::too_many_arguments)]
pub fn u_eps_estimate(
    field: &FieldRealization,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<MCEstimate> {
    check_common(field, f, t, x, eps, dt)?;
    if n_paths == 0 {
        return Err(invalid("n_paths", "at least one path is required"));
    }
    let samples: Vec<Complex64> = (0..n_paths as u64)
        .into_par_iter()
        .map_init(ModeScratch::default, |s, i| u_eps_sample(field, f, t, x, eps, dt, path_seed(seed, i), s))
        .collect();
    Ok(MCEstimate::from_samples(samples))
}

/// Sequential variant for use inside an outer parallel loop.
#[allow(clippy::too_many_arguments)]
pub(crate) fn u_eps_inner(
    field: &FieldRealization,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
    scratch: &mut ModeScratch,
) -> MCEstimate {
    MCEstimate::from_samples((0..n_paths as u64).map(|i| u_eps_sample(field, f, t, x, eps, dt, path_seed(seed, i), scratch)))
}

/// `u_ε` for one realization with the phase `ε∫V` as control variate.
/// Its path mean is exact for Gaussian fields; Poisson fields use the plain
/// mean. Returns the estimate and the variance of the estimate.
#[allow(clippy::too_many_arguments)]
pub(crate) fn u_eps_inner_controlled(
    field: &FieldRealization,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
    scratch: &mut ModeScratch,
) -> Result<(Complex64, f64)> {
    check_common(field, f, t, x, eps, dt)?;
    if n_paths < 2 {
        return Err(invalid("n_paths", "the control variate needs at least two paths"));
    }
    let parts: Vec<(f64, f64)> =
        (0..n_paths as u64).map(|i| u_eps_parts(field, f, t, x, eps, dt, path_seed(seed, i), scratch)).collect();
    let n = n_paths as f64;
    let ys: Vec<Complex64> = parts.iter().map(|&(w, c)| Complex64::from_polar(w, c)).collect();
    let my = ys.iter().sum::<Complex64>() / n;
    let FieldRealization::Gaussian(g) = field else {
        let v = ys.iter().map(|y| (y - my).norm_sqr()).sum::<f64>() / (n - 1.0);
        return Ok((my, v / n));
    };
    let steps = step_count(t / (eps * eps), dt);
    let y0: Vec<f64> = x.iter().map(|v| v / eps).collect();
    let mu = g.trapezoid_path_mean(&y0, steps as f64 * eps * eps * dt, steps, eps) / eps;
    let mc = parts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut syc, mut scc) = (Complex64::new(0.0, 0.0), 0.0);
    for (y, p) in ys.iter().zip(&parts) {
        syc += (y - my) * (p.1 - mc);
        scc += (p.1 - mc).powi(2);
    }
    let beta = if scc > 0.0 { syc / scc } else { Complex64::new(0.0, 0.0) };
    let est = my - beta * (mc - mu);
    let resid = ys.iter().zip(&parts).map(|(y, p)| (y - my - beta * (p.1 - mc)).norm_sqr()).sum::<f64>() / (n - 1.0);
    Ok((est, resid / n))
}

/// One sample of `f(x+B_t) e^{-σ²t/2} i ε^{-3/2} ∫_0^t V((x+B_s)/ε) ds`, path on `[0, t]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn v_eps_sample(
    field: &FieldRealization,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    sigma2: f64,
    dt: f64,
    seed: u64,
    scratch: &mut ModeScratch,
) -> Complex64 {
    let (w, c) = v_eps_parts(field, f, t, x, eps, sigma2, dt, seed, scratch);
    Complex64::new(0.0, w * c)
}

/// `(f(x+B_t), e^{-σ²t/2} ε^{-3/2} ∫_0^t V((x+B_s)/ε) ds)` for one path.
#[allow(clippy::too_many_arguments)]
fn v_eps_parts(
    field: &FieldRealization,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    sigma2: f64,
    dt: f64,
    seed: u64,
    scratch: &mut ModeScratch,
) -> (f64, f64) {
    let steps = step_count(t, dt);
    let h = t / steps as f64;
    let sd = h.sqrt();
    let mut g = rng::stream(&[seed, rng::tag::PATH]);
    let mut b: Vec<f64> = x.to_vec();
    let mut y: Vec<f64> = b.iter().map(|v| v / eps).collect();
    let mut v0 = field.value_with(&y, scratch);
    let mut integral = 0.0;
    for _ in 0..steps {
        for (bk, yk) in b.iter_mut().zip(y.iter_mut()) {
            let z: f64 = StandardNormal.sample(&mut g);
            *bk += sd * z;
            *yk = *bk / eps;
        }
        let v1 = field.value_with(&y, scratch);
        integral += 0.5 * (v0 + v1);
        v0 = v1;
    }
    (f.value(&b), (-0.5 * sigma2 * t).exp() * eps.powf(-1.5) * integral * h)
}

fn check_v(field: &FieldRealization, f: &InitialCondition, t: f64, x: &[f64], eps: f64, sigma2: f64, dt: f64) -> Result<()> {
    if field.dim() != 3 {
        return Err(Error::Dimension { dim: field.dim(), reason: "the ε^{-3/2} scaling of v_ε is the d = 3 normalization".into() });
    }
    check_common(field, f, t, x, eps, dt)?;
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(invalid("sigma2", "must be finite and >= 0"));
    }
    Ok(())
}

/// Monte Carlo estimate of `v_ε(t, x)`. Here `dt` is the step on the
/// physical horizon `[0, t]`; resolving the field needs `dt ≲ ε²/10`.
#[allow(clippy::too_many_arguments)]
pub fn v_eps_estimate(
    field: &FieldRealization,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    sigma2: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<MCEstimate> {
    check_v(field, f, t, x, eps, sigma2, dt)?;
    if n_paths == 0 {
        return Err(invalid("n_paths", "at least one path is required"));
    }
    let samples: Vec<Complex64> = (0..n_paths as u64)
        .into_par_iter()
        .map_init(ModeScratch::default, |s, i| v_eps_sample(field, f, t, x, eps, sigma2, dt, path_seed(seed, i), s))
        .collect();
    Ok(MCEstimate::from_samples(samples))
}

/// `Im v_ε` for one realization with the integral `∫V` as control variate,
/// returning `(estimate, variance of the estimate)`. The control mean is
/// exact for Gaussian fields, so for constant `f` the estimate carries no
/// path noise. Other fields fall back to the plain path average.
#[allow(clippy::too_many_arguments)]
pub(crate) fn v_eps_inner_controlled(
    field: &FieldRealization,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    sigma2: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
    scratch: &mut ModeScratch,
) -> Result<(f64, f64)> {
    check_v(field, f, t, x, eps, sigma2, dt)?;
    if n_paths < 2 {
        return Err(invalid("n_paths", "the control variate needs at least two paths"));
    }
    let parts: Vec<(f64, f64)> =
        (0..n_paths as u64).map(|i| v_eps_parts(field, f, t, x, eps, sigma2, dt, path_seed(seed, i), scratch)).collect();
    let n = n_paths as f64;
    let ys: Vec<f64> = parts.iter().map(|p| p.0 * p.1).collect();
    let my = ys.iter().sum::<f64>() / n;
    let FieldRealization::Gaussian(g) = field else {
        let v = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / (n - 1.0);
        return Ok((my, v / n));
    };
    let y0: Vec<f64> = x.iter().map(|v| v / eps).collect();
    let mu = (-0.5 * sigma2 * t).exp() * eps.powf(-1.5) * g.trapezoid_path_mean(&y0, t, step_count(t, dt), eps);
    let mc = parts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut syc, mut scc) = (0.0, 0.0);
    for (y, p) in ys.iter().zip(&parts) {
        syc += (y - my) * (p.1 - mc);
        scc += (p.1 - mc).powi(2);
    }
    let beta = if scc > 0.0 { syc / scc } else { 0.0 };
    let est = my - beta * (mc - mu);
    let resid = ys
        .iter()
        .zip(&parts)
        .map(|(y, p)| (y - my - beta * (p.1 - mc)).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Ok((est, resid / n))
}

/// Path functionals of the decomposition `X = R + M` along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFunctionals {
    /// `ε∫V(y_s)ds` (trapezoidal)
    pub x: f64,
    /// `ε∫λΦ_λ(y_s)ds − εΦ_λ(y_end) + εΦ_λ(y_0)`
    pub r: f64,
    /// `ε Σ ∇Φ_λ(y_n)·ΔB_n` (left point)
    pub m: f64,
    /// `εξ·B_end + M`
    pub m_tilde: f64,
    /// `ε² Σ |ξ + ∇Φ_λ(y_n)|² dt`
    pub qv: f64,
    /// `ε² Σ (|∇Φ_λ(y_n)|² − σ_λ²) dt`
    pub qv_gap_gradient: f64,
    /// `2ε² Σ ξ·∇Φ_λ(y_n) dt`
    pub qv_gap_cross: f64,
    /// `(|ξ|² + σ_λ²)·t` on the discrete horizon
    pub qv_target: f64,
    /// `X − R − M`, the discrete Itô remainder
    pub residual: f64,
}

fn evaluator_sigma_lambda2(ev: &CorrectorEvaluator<'_>) -> Result<f64> {
    match ev.field().spectrum() {
        Some(spec) => sigma_lambda2(&spec?, ev.lambda()),
        None => match ev.field() {
            FieldRealization::Gaussian(g) => Ok(empirical_sigma_lambda2(g, ev.lambda())),
            FieldRealization::Poisson(_) => unreachable!("shot-noise fields always carry a spectrum"),
        },
    }
}

/// Spatial average of `|∇Φ_λ|²` for a fixed set of modes.
fn empirical_sigma_lambda2(g: &GaussianField, lambda: f64) -> f64 {
    g.modes()
        .iter()
        .map(|m| {
            let q: f64 = m.frequency.iter().map(|v| v * v).sum();
            0.5 * m.weight * m.weight * q / (lambda + 0.5 * q).powi(2)
        })
        .sum()
}

pub fn martingale_decomposition(
    ev: &CorrectorEvaluator<'_>,
    path: &BrownianPath,
    x: &[f64],
    eps: f64,
    xi: &[f64],
) -> Result<PathFunctionals> {
    let s2 = evaluator_sigma_lambda2(ev)?;
    decomposition_with(ev, path, x, eps, xi, s2)
}

pub(crate) fn decomposition_with(
    ev: &CorrectorEvaluator<'_>,
    path: &BrownianPath,
    x: &[f64],
    eps: f64,
    xi: &[f64],
    sigma_l2: f64,
) -> Result<PathFunctionals> {
    ensure_positive("eps", eps)?;
    let lambda = ev.lambda();
    if ((lambda - eps * eps) / (eps * eps)).abs() > 1e-12 {
        return Err(invalid("lambda", format!("decomposition requires λ = ε², got λ = {lambda}, ε² = {}", eps * eps)));
    }
    let d = ev.field().dim();
    if x.len() != d || xi.len() != d || path.dim() != d {
        return Err(invalid("x", "dimension mismatch between field, point, ξ and path"));
    }
    let dt = path.dt();
    let mut scratch = ModeScratch::default();
    let mut grad = vec![0.0; d];
    let mut y: Vec<f64> = x.iter().map(|v| v / eps).collect();
    let (mut v0, phi_start) = ev.sample_into(&y, &mut scratch, &mut grad);
    let mut phi0 = phi_start;
    let (mut int_v, mut int_phi, mut m, mut qv, mut gap1, mut gap2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for n in 0..path.steps() {
        let inc = path.increment(n);
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        let xg: f64 = xi.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let shifted: f64 = xi.iter().zip(&grad).map(|(a, b)| (a + b).powi(2)).sum();
        m += grad.iter().zip(inc).map(|(g, db)| g * db).sum::<f64>();
        qv += shifted;
        gap1 += g2 - sigma_l2;
        gap2 += xg;
        y.iter_mut().zip(inc).for_each(|(a, b)| *a += b);
        let (v1, phi1) = ev.sample_into(&y, &mut scratch, &mut grad);
        int_v += 0.5 * (v0 + v1);
        int_phi += 0.5 * (phi0 + phi1);
        v0 = v1;
        phi0 = phi1;
    }
    let e2 = eps * eps;
    let xv = eps * int_v * dt;
    let r = eps * lambda * int_phi * dt - eps * phi0 + eps * phi_start;
    let mm = eps * m;
    let b_end = path.endpoint();
    let xi2: f64 = xi.iter().map(|v| v * v).sum();
    Ok(PathFunctionals {
        x: xv,
        r,
        m: mm,
        m_tilde: eps * xi.iter().zip(&b_end).map(|(a, b)| a * b).sum::<f64>() + mm,
        qv: e2 * qv * dt,
        qv_gap_gradient: e2 * gap1 * dt,
        qv_gap_cross: 2.0 * e2 * gap2 * dt,
        qv_target: (xi2 + sigma_l2) * e2 * path.horizon(),
        residual: xv - r - mm,
    })
}
