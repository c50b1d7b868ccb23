//! Experiment dispatch and artifact writing.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::corrector::{corrector_variance, sigma_lambda2, CorrectorEvaluator};
use crate::error::{Error, Result};
use crate::feynman_kac::{
    malliavin_duality_check, mclt_bound_check, DualityIntegrand, DualityTerminal, QvProfile,
};
use crate::fluctuation::{
    clt_test_d3, d4_corrector_clt, d5_expansion_check, moments, rate_experiment, simulate_ensemble,
    v_eps_ensemble, var_eps, var_limit, wiener_variance_mc, RateConfig,
};
use crate::homogenization::{sigma2, HomogenizedModel, InitialCondition};
use crate::random_field::identities::{gaussian_fourth_moment_check, poisson_moment_identity, BoxFunction};
use crate::random_field::{covariance_radial, SpectrumFamily};
use crate::rng;

/// Pass/fail record written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub criterion: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Verdict {
    fn new(criterion: impl Into<String>, observed: f64, expected: f64, tolerance: f64, pass: bool) -> Self {
        Self { criterion: criterion.into(), observed, expected, tolerance, pass }
    }

    /// `|observed − expected| ≤ tolerance`
    fn within(criterion: impl Into<String>, observed: f64, expected: f64, tolerance: f64) -> Self {
        let pass = (observed - expected).abs() <= tolerance;
        Self::new(criterion, observed, expected, tolerance, pass)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub verdicts: Vec<Verdict>,
    /// Files written, relative to the output directory, manifest last.
    pub files: Vec<String>,
    /// Set when the run produced statistics that must not be trusted.
    pub flagged_invalid: bool,
}

impl RunOutcome {
    /// 0 when every verdict passes and nothing is flagged, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.flagged_invalid || self.verdicts.iter().any(|v| !v.pass) {
            2
        } else {
            0
        }
    }
}

/// Result of one experiment before it is written.
struct Report {
    csv_name: String,
    csv: String,
    summary: Value,
    verdicts: Vec<Verdict>,
    flagged_invalid: bool,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Git-style object hash: SHA-256 of `blob <len>\0<content>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Runs the configured experiment on a pool of `workers` threads (the
/// global pool when `None`) and writes artifacts into `config.out`.
pub fn run(config: &ExperimentConfig, workers: Option<usize>) -> Result<RunOutcome> {
    config.validate()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers {
            b = b.num_threads(n.max(1));
        }
        b.build().map_err(|e| Error::Config { key: "workers".into(), reason: e.to_string() })?
    };
    std::fs::create_dir_all(&config.out)?;
    let report = pool.install(|| dispatch(config));
    match report {
        Ok(r) => write_artifacts(config, r),
        Err(e) => {
            let summary = json!({ "kind": config.kind.name(), "error": e.to_string() });
            std::fs::write(config.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
            Err(e)
        }
    }
}

fn write_artifacts(config: &ExperimentConfig, r: Report) -> Result<RunOutcome> {
    let dir: &Path = &config.out;
    let summary = json!({
        "kind": config.kind.name(),
        "seed": config.seed,
        "flagged_invalid": r.flagged_invalid,
        "results": r.summary,
        "verdicts": r.verdicts,
    });
    let files: Vec<(String, Vec<u8>)> = vec![
        ("config.txt".into(), config.to_text().into_bytes()),
        (r.csv_name.clone(), r.csv.into_bytes()),
        ("summary.json".into(), (serde_json::to_string_pretty(&summary)? + "\n").into_bytes()),
    ];
    let mut hashes = serde_json::Map::new();
    for (name, bytes) in &files {
        std::fs::write(dir.join(name), bytes)?;
        hashes.insert(name.clone(), Value::String(content_hash(bytes)));
    }
    let manifest = json!({ "config": config.to_text(), "hash": "sha256 of `blob <len>\\0<content>`", "files": hashes });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let mut names: Vec<String> = files.into_iter().map(|f| f.0).collect();
    names.push("manifest.json".into());
    Ok(RunOutcome { verdicts: r.verdicts, files: names, flagged_invalid: r.flagged_invalid })
}

fn dispatch(c: &ExperimentConfig) -> Result<Report> {
    match c.kind {
        ExperimentKind::FieldSample => field_sample(c),
        ExperimentKind::Sigma2 => sigma2_run(c),
        ExperimentKind::Corrector => corrector_run(c),
        ExperimentKind::Simulate => simulate_run(c),
        ExperimentKind::Rates => rates_run(c),
        ExperimentKind::DistTest => dist_test_run(c),
        ExperimentKind::SpdeVar => spde_var_run(c),
        ExperimentKind::Validate => validate_run(c),
    }
}

fn field_sample(c: &ExperimentConfig) -> Result<Report> {
    let pot = c.potential()?;
    let spec = pot.spectrum();
    let lag = spec.correlation_length();
    let mut shifted = c.x.clone();
    shifted[0] += lag;
    let vals: Vec<Result<(f64, f64)>> = (0..c.n_omega as u64)
        .into_par_iter()
        .map(|w| {
            let f = pot.realize_indexed(c.seed, w)?;
            Ok((f.value(&c.x), f.value(&shifted)))
        })
        .collect();
    let vals: Vec<(f64, f64)> = vals.into_iter().collect::<Result<_>>()?;
    let a: Vec<f64> = vals.iter().map(|v| v.0).collect();
    let prod: Vec<f64> = vals.iter().map(|v| v.0 * v.1).collect();
    let (ma, mp) = (moments(&a), moments(&prod));
    let n = a.len() as f64;
    let (r0, rl) = (covariance_radial(spec, 0.0), covariance_radial(spec, lag));
    let se_var = (moments(&a.iter().map(|v| v * v).collect::<Vec<_>>()).variance / n).sqrt();
    let verdicts = vec![
        Verdict::within("field mean", ma.mean, 0.0, 4.0 * (ma.variance / n).sqrt()),
        Verdict::within("field variance R(0)", a.iter().map(|v| v * v).sum::<f64>() / n, r0, 4.0 * se_var),
        Verdict::within("covariance at one correlation length", mp.mean, rl, 4.0 * (mp.variance / n).sqrt()),
    ];
    Ok(Report {
        csv_name: "field_sample.csv".into(),
        csv: csv_text(
            &["omega_index", "value", "value_shifted"],
            vals.iter().enumerate().map(|(i, v)| vec![i.to_string(), num(v.0), num(v.1)]),
        ),
        summary: json!({ "lag": lag, "covariance_0": r0, "covariance_lag": rl, "sample_mean": ma.mean, "sample_variance": ma.variance }),
        verdicts,
        flagged_invalid: false,
    })
}

/// `σ² = 4(2π)^{-d}A|S^{d-1}| ρ^{d-2} 2^{(d-4)/2} Γ((d-2)/2)` for the Gaussian bump.
pub fn sigma2_gaussian_closed_form(dim: usize, amplitude: f64, width: f64) -> f64 {
    let d = dim as f64;
    4.0 * amplitude * crate::quadrature::sphere_area(dim) * width.powf(d - 2.0) * 2f64.powf((d - 4.0) / 2.0)
        * statrs::function::gamma::gamma((d - 2.0) / 2.0)
        / (2.0 * PI).powf(d)
}

fn sigma2_run(c: &ExperimentConfig) -> Result<Report> {
    let spec = c.spectrum()?;
    let s2 = sigma2(&spec)?;
    let mut verdicts = Vec::new();
    let mut closed = f64::NAN;
    if let SpectrumFamily::GaussianBump { amplitude, width } = spec.family() {
        closed = sigma2_gaussian_closed_form(c.dim, *amplitude, *width);
        verdicts.push(Verdict::within("sigma2 closed form", s2, closed, 1e-6 * closed.abs()));
    }
    Ok(Report {
        csv_name: "sigma2.csv".into(),
        csv: csv_text(&["dim", "sigma2", "closed_form"], [vec![c.dim.to_string(), num(s2), num(closed)]]),
        summary: json!({ "sigma2": s2, "closed_form": if closed.is_nan() { Value::Null } else { json!(closed) } }),
        verdicts,
        flagged_invalid: false,
    })
}

fn corrector_run(c: &ExperimentConfig) -> Result<Report> {
    let pot = c.potential()?;
    let spec = pot.spectrum();
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for &lambda in &c.lambdas {
        let quad = corrector_variance(spec, lambda)?;
        let sl2 = sigma_lambda2(spec, lambda)?;
        let vals: Vec<Result<f64>> = (0..c.n_omega as u64)
            .into_par_iter()
            .map(|w| {
                let f = pot.realize_indexed(c.seed, w)?;
                Ok(CorrectorEvaluator::new(&f, lambda)?.value(&c.x))
            })
            .collect();
        let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
        let m = moments(&vals);
        let se = m.variance * (2.0 / (vals.len() as f64 - 1.0).max(1.0)).sqrt();
        verdicts.push(Verdict::within(format!("corrector variance at lambda={lambda:e}"), m.variance, quad, 4.0 * se));
        rows.push(vec![num(lambda), num(quad), num(m.variance), num(se), num(sl2), num(quad / lambda.ln().abs())]);
    }
    Ok(Report {
        csv_name: "corrector.csv".into(),
        csv: csv_text(
            &["lambda", "quadrature_variance", "sample_variance", "std_err", "sigma_lambda2", "variance_over_log_lambda"],
            rows,
        ),
        summary: json!({ "n_omega": c.n_omega }),
        verdicts,
        flagged_invalid: false,
    })
}

fn simulate_run(c: &ExperimentConfig) -> Result<Report> {
    let pot = c.potential()?;
    let samples =
        simulate_ensemble(&pot, &c.initial, c.t, &c.x, &c.eps_list, c.n_omega, c.n_paths, c.dt.value(), c.seed)?;
    let uh = HomogenizedModel::new(pot.spectrum(), c.initial.clone())?.value(c.t, &c.x);
    let per_eps: Vec<Value> = c
        .eps_list
        .iter()
        .map(|&e| {
            let s: Vec<_> = samples.iter().filter(|s| s.eps == e).collect();
            let n = s.len() as f64;
            json!({
                "epsilon": e,
                "mean_abs_err": s.iter().map(|s| (s.u_eps - uh).norm()).sum::<f64>() / n,
                "mean_inner_ci": s.iter().map(|s| s.inner_ci).sum::<f64>() / n,
            })
        })
        .collect();
    Ok(Report {
        csv_name: "simulate.csv".into(),
        csv: csv_text(
            &["epsilon", "omega_index", "re_u_eps", "im_u_eps", "n_paths", "inner_ci"],
            samples.iter().map(|s| {
                vec![num(s.eps), s.omega.to_string(), num(s.u_eps.re), num(s.u_eps.im), s.n_paths.to_string(), num(s.inner_ci)]
            }),
        ),
        summary: json!({ "u_hom": uh, "per_eps": per_eps }),
        verdicts: vec![],
        flagged_invalid: false,
    })
}

/// Tolerance on the fitted slope around the nominal rate.
pub fn rate_slope_tolerance(dim: usize) -> f64 {
    if dim == 3 {
        0.15
    } else {
        0.25
    }
}

fn rates_run(c: &ExperimentConfig) -> Result<Report> {
    let r = rate_experiment(&RateConfig {
        potential: c.potential()?,
        initial: c.initial.clone(),
        t: c.t,
        x: c.x.clone(),
        eps_list: c.eps_list.clone(),
        n_omega: c.n_omega,
        min_paths: c.n_paths,
        max_paths: c.max_paths,
        pilot_omega: c.pilot_omega,
        dt: c.dt.value(),
        seed: c.seed,
    })?;
    let tol = rate_slope_tolerance(c.dim);
    let mut verdicts = vec![Verdict::within("rate slope", r.slope, r.nominal_slope, tol)];
    if c.dim == 3 {
        verdicts.push(Verdict::new("rate fit r_squared", r.r_squared, 1.0, 0.1, r.r_squared >= 0.9));
    }
    Ok(Report {
        csv_name: "rates.csv".into(),
        csv: csv_text(
            &["epsilon", "mean_abs_err", "std_err", "fitted_err", "n_paths", "inner_ci", "valid"],
            r.rows.iter().map(|row| {
                vec![
                    num(row.eps),
                    num(row.mean_abs_err),
                    num(row.std_err),
                    num(row.fitted_err),
                    row.n_paths.to_string(),
                    num(row.inner_ci),
                    row.valid.to_string(),
                ]
            }),
        ),
        summary: json!({
            "slope": r.slope, "intercept": r.intercept, "r_squared": r.r_squared,
            "nominal_slope": r.nominal_slope, "log_correction_applied": r.log_correction_applied,
            "u_hom": r.u_hom, "issues": r.issues,
        }),
        verdicts,
        flagged_invalid: !r.valid,
    })
}

fn dist_test_run(c: &ExperimentConfig) -> Result<Report> {
    let pot = c.potential()?;
    match c.dim {
        3 => {
            let eps = *c.eps_list.last().expect("validated non-empty");
            let e = v_eps_ensemble(&pot, &c.initial, c.t, &c.x, eps, c.n_omega, c.n_paths, c.dt.value(), c.seed)?;
            let var = var_eps(pot.spectrum(), &c.initial, c.t, &c.x, e.sigma2, eps)?;
            let t = clt_test_d3(&e.samples, var)?;
            // inner noise must stay below a third of the target spread
            let noisy = e.inner_noise > var / 9.0;
            Ok(Report {
                csv_name: "dist_test.csv".into(),
                csv: csv_text(
                    &["omega_index", "re_v_eps", "im_v_eps"],
                    e.samples.iter().enumerate().map(|(i, z)| vec![i.to_string(), num(z.re), num(z.im)]),
                ),
                summary: json!({
                    "epsilon": eps, "target_variance": var, "ks_statistic": t.ks_statistic, "p_value": t.p_value,
                    "sample_variance": t.variance, "inner_noise": e.inner_noise, "skewness": t.skewness,
                    "re_mean": t.re_mean, "re_std_err": t.re_std_err,
                }),
                verdicts: vec![
                    Verdict::new("KS p-value of Im v_eps", t.p_value, 0.01, 0.0, t.p_value > 0.01),
                    Verdict::within("mean of Re v_eps", t.re_mean, 0.0, 4.0 * t.re_std_err),
                ],
                flagged_invalid: noisy,
            })
        }
        4 => {
            let r = d4_corrector_clt(&pot, &c.eps_list, c.n_omega, c.seed)?;
            Ok(Report {
                csv_name: "dist_test.csv".into(),
                csv: csv_text(
                    &["epsilon", "lambda", "sample_variance", "quadrature_variance", "log_lambda_ratio", "ks_statistic", "p_value"],
                    r.rows.iter().map(|row| {
                        vec![
                            num(row.eps),
                            num(row.lambda),
                            num(row.sample_variance),
                            num(row.quadrature_variance),
                            num(row.log_lambda_ratio),
                            num(row.test.ks_statistic),
                            num(row.test.p_value),
                        ]
                    }),
                ),
                summary: json!({
                    "stated_variance": r.stated_variance, "asymptotic_variance": r.asymptotic_variance,
                    "stated_p_value": r.stated_test.p_value, "asymptotic_p_value": r.asymptotic_test.p_value,
                    "sample_variance": r.stated_test.variance,
                }),
                verdicts: vec![Verdict::new(
                    "KS p-value against 4R(0)/(2pi)^4",
                    r.stated_test.p_value,
                    0.01,
                    0.0,
                    r.stated_test.p_value > 0.01,
                )],
                flagged_invalid: false,
            })
        }
        _ => {
            let rows = d5_expansion_check(&pot, &c.initial, c.t, &c.x, &c.eps_list, c.n_omega, c.n_paths, c.dt.value(), c.seed)?;
            let mut verdicts = Vec::new();
            for w in rows.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                if let (Some(ca), Some(cb)) = (a.correlation, b.correlation) {
                    verdicts.push(Verdict::new(format!("correlation eps={} vs {}", b.eps, a.eps), cb, ca, 0.05, cb >= ca - 0.05));
                }
                verdicts.push(Verdict::new(
                    format!("residual/eps eps={} vs {}", b.eps, a.eps),
                    b.residual_over_eps,
                    a.residual_over_eps,
                    0.0,
                    b.residual_over_eps < a.residual_over_eps,
                ));
            }
            let degenerate = rows.iter().any(|r| r.correlation.is_none());
            Ok(Report {
                csv_name: "dist_test.csv".into(),
                csv: csv_text(
                    &["epsilon", "correlation", "residual_l1", "residual_over_eps", "mean_abs_err"],
                    rows.iter().map(|r| {
                        vec![
                            num(r.eps),
                            r.correlation.map_or("nan".into(), num),
                            num(r.residual_l1),
                            num(r.residual_over_eps),
                            num(r.mean_abs_err),
                        ]
                    }),
                ),
                summary: json!({ "degenerate": degenerate }),
                verdicts,
                flagged_invalid: degenerate,
            })
        }
    }
}

fn spde_var_run(c: &ExperimentConfig) -> Result<Report> {
    let spec = c.spectrum()?;
    let s2 = sigma2(&spec)?;
    let lim = var_limit(&spec, &c.initial, c.t, &c.x, s2)?;
    let mut rows = Vec::new();
    let mut last = f64::NAN;
    for &e in &c.eps_list {
        let v = var_eps(&spec, &c.initial, c.t, &c.x, s2, e)?;
        rows.push(vec![num(e), num(v), num(v / lim)]);
        last = v / lim;
    }
    let mut verdicts = vec![Verdict::within("var_eps/var_limit at smallest eps", last, 1.0, 0.05)];
    let mut summary = json!({ "sigma2": s2, "var_limit": lim });
    if let InitialCondition::Constant { value } = c.initial {
        let mc = wiener_variance_mc(&spec, value, c.t, s2, c.n_samples, c.seed)?;
        let m = mc.mean().re;
        summary["wiener_mc"] = json!(m);
        summary["wiener_mc_ci"] = json!(mc.ci());
        verdicts.push(Verdict::within("Wiener-integral Monte Carlo", m, lim, (4.0 * mc.ci()).max(0.01 * lim)));
    }
    Ok(Report {
        csv_name: "spde_var.csv".into(),
        csv: csv_text(&["epsilon", "var_eps", "ratio_to_limit"], rows),
        summary,
        verdicts,
        flagged_invalid: false,
    })
}

/// One line of the identity suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub check: String,
    pub closed_form: Complex64,
    pub monte_carlo: Complex64,
    pub ci: f64,
    pub pass: bool,
}

/// Exact-identity suite: Poisson moment identity, Gaussian fourth moment,
/// duality, and the martingale CLT bound, each with `n` samples.
pub fn identity_suite(n: usize, seed: u64) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    let s = |k: u64| rng::mix(&[seed, k]);

    let bump = BoxFunction::Bump { center: vec![0.5; 3], radius: 0.5, amplitude: 0.5 };
    let ind = BoxFunction::Indicator { lo: vec![0.2; 3], hi: vec![0.9; 3], value: 0.7 };
    for (name, h) in [("poisson moment (bump, bump, bump)", [&bump, &bump, &bump]), ("poisson moment (bump, box, bump)", [&bump, &ind, &bump])] {
        let r = poisson_moment_identity(h, &[0.0; 3], &[1.0; 3], n, s(1))?;
        rows.push(SuiteRow { check: name.into(), closed_form: r.closed_form, monte_carlo: r.mc.mean(), ci: r.mc.ci(), pass: r.agrees(4.0) });
    }

    let sigma = [[0.3, 0.15, 0.06, 0.03], [0.15, 0.3, 0.09, 0.06], [0.06, 0.09, 0.3, 0.12], [0.03, 0.06, 0.12, 0.3]];
    let r = gaussian_fourth_moment_check(&sigma, 0.3, n, s(2))?;
    rows.push(SuiteRow { check: "gaussian fourth moment".into(), closed_form: r.closed_form, monte_carlo: r.mc.mean(), ci: r.mc.ci(), pass: r.agrees(4.0) });

    let bump_ic = InitialCondition::GaussianBump { center: vec![0.2, -0.1, 0.0], width: 0.8, height: 1.0 };
    for (name, f, g, steps) in [
        ("duality x1 with unit integrand", DualityTerminal::Coordinate { axis: 0 }, DualityIntegrand::Unit { axis: 0 }, 20),
        ("duality bump with sine integrand", DualityTerminal::Smooth(bump_ic), DualityIntegrand::Sine, 50),
    ] {
        let r = malliavin_duality_check(&f, &g, 3, 1.0, steps, n, s(3))?;
        rows.push(SuiteRow {
            check: name.into(),
            closed_form: r.rhs.into(),
            monte_carlo: r.lhs.into(),
            ci: r.ci,
            pass: r.agrees(4.0),
        });
    }

    let mut profiles = vec![QvProfile::Deterministic { total: 1.0 }];
    profiles.extend([0.05, 0.1, 0.2].iter().map(|d| QvProfile::Deterministic { total: 1.0 + d }));
    profiles.push(QvProfile::RandomTotal { spread: 0.1 });
    profiles.push(QvProfile::Adaptive { amplitude: 0.2 });
    for (i, r) in mclt_bound_check(&profiles, 64, n, s(4))?.into_iter().enumerate() {
        let (expected, observed, pass) = if i == 0 {
            (0.0, r.lhs, r.lhs < 3.0 * r.noise_floor)
        } else {
            let ratio = r.ratio.unwrap_or(f64::INFINITY);
            (2.0, ratio, ratio <= 2.0)
        };
        rows.push(SuiteRow {
            check: format!("mclt {}", r.profile),
            closed_form: expected.into(),
            monte_carlo: observed.into(),
            ci: if i == 0 { r.noise_floor } else { r.lhs_ci / r.rhs },
            pass,
        });
    }
    Ok(rows)
}

fn validate_run(c: &ExperimentConfig) -> Result<Report> {
    let rows = identity_suite(c.n_samples, c.seed)?;
    let verdicts = rows
        .iter()
        .map(|r| Verdict::new(r.check.clone(), r.monte_carlo.re, r.closed_form.re, 4.0 * r.ci, r.pass))
        .collect();
    Ok(Report {
        csv_name: "validate.csv".into(),
        csv: csv_text(
            &["check", "closed_form_re", "closed_form_im", "monte_carlo_re", "monte_carlo_im", "ci", "pass"],
            rows.iter().map(|r| {
                vec![
                    r.check.replace(',', ";"),
                    num(r.closed_form.re),
                    num(r.closed_form.im),
                    num(r.monte_carlo.re),
                    num(r.monte_carlo.im),
                    num(r.ci),
                    r.pass.to_string(),
                ]
            }),
        ),
        summary: json!({ "n_samples": c.n_samples }),
        verdicts,
        flagged_invalid: false,
    })
}

/// Output directory used when none is configured.
pub fn default_out() -> PathBuf {
    PathBuf::from("results")
}
