//! Ensemble error `E|u_ε − u_hom|` against ε and its log-log fit.

use std::f64::consts::PI;
use num_complex::Complex64;
use rayon::prelude::*;

use super::stats::{linear_fit, LineFit};
use crate::error::{invalid, Error, Result};
use crate::corrector::{sigma_lambda2, CorrectorEvaluator};
use crate::feynman_kac::{decomposition_with, step_count, u_eps_inner, u_eps_inner_controlled, BrownianPath, Z95};
use crate::homogenization::{sigma2, HomogenizedModel, InitialCondition};
use crate::random_field::{
    make_gaussian_field_with, make_poisson_field, FieldRealization, FrequencySampling, ModeScratch, ShapeFunction,
    SpectrumModel,
};
use crate::rng;

/// Law of the potential: what is needed to draw independent realizations.
#[derive(Debug, Clone)]
pub struct Potential {
    kind: PotentialKind,
    spectrum: SpectrumModel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    Gaussian { modes: usize, sampling: FrequencySampling },
    Poisson { shape: ShapeFunction },
}

impl Potential {
    pub fn gaussian(spectrum: SpectrumModel, modes: usize, sampling: FrequencySampling) -> Result<Self> {
        if modes == 0 {
            return Err(invalid("field.modes", "at least one mode is required"));
        }
        Ok(Self { kind: PotentialKind::Gaussian { modes, sampling }, spectrum })
    }

    pub fn poisson(shape: ShapeFunction) -> Result<Self> {
        let spectrum = SpectrumModel::poisson_induced(shape.clone())?;
        Ok(Self { kind: PotentialKind::Poisson { shape }, spectrum })
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn spectrum(&self) -> &SpectrumModel {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn realize(&self, seed: u64) -> Result<FieldRealization> {
        match &self.kind {
            PotentialKind::Gaussian { modes, sampling } => {
                Ok(make_gaussian_field_with(&self.spectrum, *modes, seed, *sampling)?.into())
            }
            PotentialKind::Poisson { shape } => Ok(make_poisson_field(shape, seed)?.into()),
        }
    }

    /// Realization number `omega` under a master seed.
    pub fn realize_indexed(&self, seed: u64, omega: u64) -> Result<FieldRealization> {
        self.realize(rng::mix(&[seed, rng::tag::FIELD, omega]))
    }

    /// `min(0.05, ℓ²/20)` in rescaled path time.
    pub fn default_dt(&self) -> f64 {
        let l = self.spectrum.correlation_length();
        0.05f64.min(l * l / 20.0)
    }
}

#[derive(Debug, Clone)]
pub struct RateConfig {
    pub potential: Potential,
    pub initial: InitialCondition,
    pub t: f64,
    pub x: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub n_omega: usize,
    /// Inner paths used by the pilot and the floor of the adaptive budget.
    pub min_paths: usize,
    pub max_paths: usize,
    pub pilot_omega: usize,
    /// Step in rescaled path time; `None` picks `Potential::default_dt`.
    pub dt: Option<f64>,
    pub seed: u64,
}

/// One ε of the experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub eps: f64,
    pub mean_abs_err: f64,
    pub std_err: f64,
    /// Error after the d = 4 logarithmic correction (equal to `mean_abs_err` otherwise).
    pub fitted_err: f64,
    pub n_paths: usize,
    /// Mean inner 95% half-width of the per-realization estimates.
    pub inner_ci: f64,
    pub valid: bool,
}

/// Per-realization estimate, kept for CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaSample {
    pub eps: f64,
    pub omega: usize,
    pub u_eps: Complex64,
    pub n_paths: usize,
    pub inner_ci: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFitResult {
    pub rows: Vec<RateRow>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub nominal_slope: f64,
    pub log_correction_applied: bool,
    pub u_hom: f64,
    pub valid: bool,
    pub issues: Vec<String>,
    pub samples: Vec<OmegaSample>,
}

/// Adaptive inner budget: the smallest `N_B` for which the inner 95%
/// half-width `Z95·s/√N_B` is a third of the error `e`, with 20% headroom.
/// Noise with no resolvable error gets the full budget.
pub fn inner_budget(inner_std: f64, error: f64, min_paths: usize, max_paths: usize) -> usize {
    if !inner_std.is_finite() || !(inner_std > 0.0) {
        return min_paths;
    }
    if !(error > 0.0) {
        return max_paths;
    }
    let n = (3.0 * Z95 * inner_std / error).powi(2) * 1.2;
    (n.ceil() as usize).clamp(min_paths, max_paths)
}

fn validate(cfg: &RateConfig) -> Result<()> {
    let d = cfg.potential.dim();
    if !(3..=5).contains(&d) {
        return Err(Error::Dimension { dim: d, reason: "rate experiments cover d = 3, 4, 5".into() });
    }
    if cfg.x.len() != d {
        return Err(invalid("x", format!("expected {d} coordinates")));
    }
    cfg.initial.validate(d)?;
    crate::error::ensure_positive("t", cfg.t)?;
    let mut eps = cfg.eps_list.clone();
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(invalid("eps_list", "entries must be finite and > 0"));
    }
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    if eps.len() < 3 {
        return Err(invalid("eps_list", "at least three distinct values are needed for a fit"));
    }
    if cfg.n_omega < 2 {
        return Err(invalid("n_omega", "at least two realizations are needed"));
    }
    if cfg.min_paths < 2 || cfg.max_paths < cfg.min_paths {
        return Err(invalid("n_paths", "need 2 <= min_paths <= max_paths"));
    }
    if let Some(dt) = cfg.dt {
        crate::error::ensure_positive("dt", dt)?;
    }
    Ok(())
}

/// `(u_ε estimate, inner CI)` per realization with `n_b` paths each.
#[allow(clippy::too_many_arguments)]
fn ensemble_at(
    fields: &[FieldRealization],
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    n_b: usize,
    dt: f64,
    seed: u64,
) -> Vec<(Complex64, f64)> {
    let key = eps.to_bits();
    (0..fields.len())
        .into_par_iter()
        .map_init(ModeScratch::default, |sc, w| {
            let s = rng::mix(&[seed, rng::tag::PATH, key, w as u64]);
            let r = u_eps_inner(&fields[w], f, t, x, eps, n_b, dt, s, sc);
            (r.mean(), r.ci())
        })
        .collect()
}

/// As [`ensemble_at`] with the phase control variate; `n_b >= 2`.
#[allow(clippy::too_many_arguments)]
fn controlled_ensemble_at(
    fields: &[FieldRealization],
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps: f64,
    n_b: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<(Complex64, f64)>> {
    let key = eps.to_bits();
    (0..fields.len())
        .into_par_iter()
        .map_init(ModeScratch::default, |sc, w| {
            let s = rng::mix(&[seed, rng::tag::PATH, key, w as u64]);
            let (u, v) = u_eps_inner_controlled(&fields[w], f, t, x, eps, n_b, dt, s, sc)?;
            Ok((u, Z95 * v.sqrt()))
        })
        .collect()
}

/// Raw `u_ε(t, x)` estimates for every (ε, realization) with a fixed inner
/// budget. Seeds match those of [`rate_experiment`].
#[allow(clippy::too_many_arguments)]
pub fn simulate_ensemble(
    potential: &Potential,
    f: &InitialCondition,
    t: f64,
    x: &[f64],
    eps_list: &[f64],
    n_omega: usize,
    n_paths: usize,
    dt: Option<f64>,
    seed: u64,
) -> Result<Vec<OmegaSample>> {
    let d = potential.dim();
    if x.len() != d {
        return Err(invalid("x", format!("expected {d} coordinates")));
    }
    f.validate(d)?;
    crate::error::ensure_positive("t", t)?;
    if n_omega == 0 || n_paths == 0 {
        return Err(invalid("n_omega", "need at least one realization and one path"));
    }
    for &e in eps_list {
        crate::error::ensure_positive("eps", e)?;
    }
    let dt = dt.unwrap_or_else(|| potential.default_dt());
    crate::error::ensure_positive("dt", dt)?;
    let fields: Vec<FieldRealization> =
        (0..n_omega as u64).map(|w| potential.realize_indexed(seed, w)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for &eps in eps_list {
        let est = ensemble_at(&fields, f, t, x, eps, n_paths, dt, seed);
        out.extend(est.into_iter().enumerate().map(|(w, (u, ci))| OmegaSample {
            eps,
            omega: w,
            u_eps: u,
            n_paths,
            inner_ci: ci,
        }));
    }
    Ok(out)
}

pub fn rate_experiment(cfg: &RateConfig) -> Result<RateFitResult> {
    validate(cfg)?;
    let d = cfg.potential.dim();
    let spec = cfg.potential.spectrum();
    let model = HomogenizedModel::with_sigma2(d, sigma2(spec)?, cfg.initial.clone())?;
    let uh = model.value(cfg.t, &cfg.x);
    let dt = cfg.dt.unwrap_or_else(|| cfg.potential.default_dt());
    let fields: Vec<FieldRealization> =
        (0..cfg.n_omega as u64).map(|w| cfg.potential.realize_indexed(cfg.seed, w)).collect::<Result<_>>()?;
    let pilot_n = cfg.pilot_omega.clamp(1, cfg.n_omega);

    let mut rows = Vec::new();
    let mut samples = Vec::new();
    let mut issues = Vec::new();
    for &eps in &cfg.eps_list {
        let key = eps.to_bits();
        let pilot: Vec<(f64, f64)> = (0..pilot_n)
            .into_par_iter()
            .map_init(ModeScratch::default, |s, w| {
                let seed = rng::mix(&[cfg.seed, rng::tag::PILOT, key, w as u64]);
                let (u, v) = u_eps_inner_controlled(&fields[w], &cfg.initial, cfg.t, &cfg.x, eps, cfg.min_paths, dt, seed, s)?;
                // per-path variance after the control
                Ok((v * cfg.min_paths as f64, (u - uh).norm()))
            })
            .collect::<Result<_>>()?;
        let inner_var = pilot.iter().map(|p| p.0).sum::<f64>() / pilot_n as f64;
        let s = inner_var.sqrt();
        // pilot errors carry their own inner noise: remove it from the mean
        // square, then take the Rayleigh mean/RMS ratio as a conservative E|·|
        let ms = pilot.iter().map(|p| p.1 * p.1).sum::<f64>() / pilot_n as f64;
        let e = (ms - inner_var / cfg.min_paths as f64).max(0.0).sqrt() * (PI / 4.0).sqrt();
        let mut n_b = inner_budget(s, e, cfg.min_paths, cfg.max_paths);

        let mut est = controlled_ensemble_at(&fields, &cfg.initial, cfg.t, &cfg.x, eps, n_b, dt, cfg.seed)?;
        let n = est.len() as f64;
        let abs_err = |est: &[(Complex64, f64)]| est.iter().map(|(u, _)| (u - uh).norm()).sum::<f64>() / n;
        let mean_ci = |est: &[(Complex64, f64)]| est.iter().map(|p| p.1).sum::<f64>() / n;
        if !(mean_ci(&est) <= abs_err(&est) / 3.0) && n_b < cfg.max_paths {
            // one correction pass budgeted from the full ensemble
            let s_main = mean_ci(&est) * (n_b as f64).sqrt() / Z95;
            let ms = est.iter().map(|(u, _)| (u - uh).norm_sqr()).sum::<f64>() / n;
            let e_main = (ms - s_main * s_main / n_b as f64).max(0.0).sqrt() * (PI / 4.0).sqrt();
            let retry = inner_budget(s_main, e_main, cfg.min_paths, cfg.max_paths);
            if retry > n_b {
                n_b = retry;
                est = controlled_ensemble_at(&fields, &cfg.initial, cfg.t, &cfg.x, eps, n_b, dt, cfg.seed)?;
            }
        }
        let errs: Vec<f64> = est.iter().map(|(u, _)| (u - uh).norm()).collect();
        let mean_abs_err = errs.iter().sum::<f64>() / n;
        let var = errs.iter().map(|e| (e - mean_abs_err).powi(2)).sum::<f64>() / (n - 1.0);
        let inner_ci = mean_ci(&est);
        let valid = mean_abs_err > 0.0 && inner_ci <= mean_abs_err / 3.0;
        if !valid {
            issues.push(format!(
                "eps = {eps}: inner CI {inner_ci:.3e} exceeds a third of the mean error {mean_abs_err:.3e}"
            ));
        }
        let fitted_err = if d == 4 { mean_abs_err / eps.ln().abs().sqrt() } else { mean_abs_err };
        rows.push(RateRow { eps, mean_abs_err, std_err: (var / n).sqrt(), fitted_err, n_paths: n_b, inner_ci, valid });
        samples.extend(est.iter().enumerate().map(|(w, (u, ci))| OmegaSample {
            eps,
            omega: w,
            u_eps: *u,
            n_paths: n_b,
            inner_ci: *ci,
        }));
    }
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    samples.sort_by(|a, b| b.eps.total_cmp(&a.eps).then(a.omega.cmp(&b.omega)));

    let usable: Vec<&RateRow> = rows.iter().filter(|r| r.fitted_err > 0.0).collect();
    let xs: Vec<f64> = usable.iter().map(|r| r.eps.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.fitted_err.ln()).collect();
    let fit = if usable.len() == rows.len() { linear_fit(&xs, &ys) } else { None };
    if fit.is_none() {
        issues.push("log-log fit undefined: some mean errors are zero".into());
    }
    let (slope, intercept, r_squared) = fit.map_or((f64::NAN, f64::NAN, f64::NAN), |f| (f.slope, f.intercept, f.r_squared));
    Ok(RateFitResult {
        valid: issues.is_empty(),
        rows,
        slope,
        intercept,
        r_squared,
        nominal_slope: if d == 3 { 0.5 } else { 1.0 },
        log_correction_applied: d == 4,
        u_hom: uh,
        issues,
        samples,
    })
}

/// One ε of the remainder scaling experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionRow {
    pub eps: f64,
    /// `E|R_t^ε|²` over realizations and paths
    pub mean_r2: f64,
    pub r2_std_err: f64,
    /// `E|⟨M̃⟩_t − (|ξ|² + σ_λ²)t|²`
    pub mean_gap2: f64,
    pub gap2_std_err: f64,
    /// `E|X − R − M|`
    pub mean_abs_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionScaling {
    pub rows: Vec<DecompositionRow>,
    /// log-log fit of `E|R|²` against ε
    pub remainder_fit: Option<LineFit>,
    /// log-log fit of the QV-gap second moment against ε
    pub gap_fit: Option<LineFit>,
}

/// Ensemble moments of the remainder and the QV gap of `X = R + M` with
/// `λ = ε²`, over `n_omega` realizations and `n_paths` paths each.
#[allow(clippy::too_many_arguments)]
pub fn decomposition_scaling(
    potential: &Potential,
    t: f64,
    x: &[f64],
    xi: &[f64],
    eps_list: &[f64],
    n_omega: usize,
    n_paths: usize,
    dt: Option<f64>,
    seed: u64,
) -> Result<DecompositionScaling> {
    let d = potential.dim();
    if x.len() != d || xi.len() != d {
        return Err(invalid("x", format!("expected {d} coordinates")));
    }
    crate::error::ensure_positive("t", t)?;
    if n_omega < 1 || n_paths < 1 || n_omega * n_paths < 2 {
        return Err(invalid("n_omega", "need at least two samples"));
    }
    let dt = dt.unwrap_or_else(|| potential.default_dt());
    let mut rows = Vec::new();
    for &eps in eps_list {
        crate::error::ensure_positive("eps", eps)?;
        let lambda = eps * eps;
        let s2 = sigma_lambda2(potential.spectrum(), lambda)?;
        let steps = step_count(t / lambda, dt);
        let key = eps.to_bits();
        let per: Vec<Result<Vec<(f64, f64, f64)>>> = (0..n_omega as u64)
            .into_par_iter()
            .map(|w| {
                let field = potential.realize_indexed(seed, w)?;
                let ev = CorrectorEvaluator::new(&field, lambda)?;
                (0..n_paths as u64)
                    .map(|i| {
                        let path = BrownianPath::generate(steps, dt, d, rng::mix(&[seed, rng::tag::PATH, key, w, i]))?;
                        let f = decomposition_with(&ev, &path, x, eps, xi, s2)?;
                        Ok((f.r * f.r, (f.qv - f.qv_target).powi(2), f.residual.abs()))
                    })
                    .collect()
            })
            .collect();
        let all: Vec<(f64, f64, f64)> = per.into_iter().collect::<Result<Vec<_>>>()?.concat();
        let n = all.len() as f64;
        let mean_sd = |k: fn(&(f64, f64, f64)) -> f64| {
            let m = all.iter().map(k).sum::<f64>() / n;
            let v = all.iter().map(|p| (k(p) - m).powi(2)).sum::<f64>() / (n - 1.0);
            (m, (v / n).sqrt())
        };
        let (mean_r2, r2_std_err) = mean_sd(|p| p.0);
        let (mean_gap2, gap2_std_err) = mean_sd(|p| p.1);
        let (mean_abs_residual, _) = mean_sd(|p| p.2);
        rows.push(DecompositionRow { eps, mean_r2, r2_std_err, mean_gap2, gap2_std_err, mean_abs_residual });
    }
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let fit = |k: fn(&DecompositionRow) -> f64| {
        if rows.iter().any(|r| !(k(r) > 0.0)) {
            return None;
        }
        let xs: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| k(r).ln()).collect();
        linear_fit(&xs, &ys)
    };
    Ok(DecompositionScaling { remainder_fit: fit(|r| r.mean_r2), gap_fit: fit(|r| r.mean_gap2), rows })
}
