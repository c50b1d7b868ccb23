//! Exact-identity checks for the stochastic calculus underlying the decomposition.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::MCEstimate;
use crate::error::{ensure_positive, invalid, Result};
use crate::homogenization::InitialCondition;
use crate::parallel::draw_blocks;
use crate::rng;

/// Terminal test function `f` with analytic gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum DualityTerminal {
    /// `f(x) = x_axis`
    Coordinate { axis: usize },
    Smooth(InitialCondition),
}

impl DualityTerminal {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            DualityTerminal::Coordinate { axis } => x[*axis],
            DualityTerminal::Smooth(f) => f.value(x),
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DualityTerminal::Coordinate { axis } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[*axis] = 1.0;
            }
            DualityTerminal::Smooth(f) => out.copy_from_slice(&f.gradient(x)),
        }
    }
}

/// Bounded integrand `g = (g_1, …, g_d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualityIntegrand {
    Zero,
    /// `g_k = δ_{k,axis}`
    Unit { axis: usize },
    /// `g_k(x) = sin(x_k)`
    Sine,
}

impl DualityIntegrand {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DualityIntegrand::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            DualityIntegrand::Unit { axis } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[*axis] = 1.0;
            }
            DualityIntegrand::Sine => out.iter_mut().zip(x).for_each(|(o, v)| *o = v.sin()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityCheck {
    /// `E{f(B_t) Σ_k ∫ g_k(B_s) dB^k_s}`
    pub lhs: f64,
    /// `E{Σ_k ∂_k f(B_t) ∫ g_k(B_s) ds}`
    pub rhs: f64,
    /// 95% half-width of the paired difference.
    pub ci: f64,
}

impl DualityCheck {
    pub fn agrees(&self, k: f64) -> bool {
        let gap = (self.lhs - self.rhs).abs();
        gap == 0.0 || gap <= k * self.ci
    }
}

/// Both sides of the integration-by-parts identity on a `steps`-point grid,
/// with common paths. The left-point discretization makes the discrete
/// identity exact, so only Monte Carlo noise separates the two sides.
#[allow(clippy::too_many_arguments)]
pub fn malliavin_duality_check(
    f: &DualityTerminal,
    g: &DualityIntegrand,
    dim: usize,
    t: f64,
    steps: usize,
    n: usize,
    seed: u64,
) -> Result<DualityCheck> {
    ensure_positive("t", t)?;
    if dim == 0 || steps == 0 || n == 0 {
        return Err(invalid("malliavin", "dimension, steps and sample count must be positive"));
    }
    let axis_ok = |a: usize| a < dim;
    match (f, g) {
        (DualityTerminal::Coordinate { axis }, _) if !axis_ok(*axis) => return Err(invalid("axis", "out of range")),
        (_, DualityIntegrand::Unit { axis }) if !axis_ok(*axis) => return Err(invalid("axis", "out of range")),
        (DualityTerminal::Smooth(ic), _) => ic.validate(dim)?,
        _ => {}
    }
    let dt = t / steps as f64;
    let sd = dt.sqrt();
    let pairs: Vec<(f64, f64)> = draw_blocks(n, &[seed, rng::tag::SAMPLE], |r| {
        let mut b = vec![0.0; dim];
        let mut gv = vec![0.0; dim];
        let mut ito = 0.0;
        let mut time_int = vec![0.0; dim];
        for _ in 0..steps {
            g.eval(&b, &mut gv);
            for k in 0..dim {
                let z: f64 = StandardNormal.sample(r);
                let db = sd * z;
                ito += gv[k] * db;
                time_int[k] += gv[k] * dt;
                b[k] += db;
            }
        }
        let mut grad = vec![0.0; dim];
        f.gradient(&b, &mut grad);
        (f.value(&b) * ito, grad.iter().zip(&time_int).map(|(a, c)| a * c).sum())
    });
    let lhs = MCEstimate::from_real(pairs.iter().map(|p| p.0));
    let rhs = MCEstimate::from_real(pairs.iter().map(|p| p.1));
    let diff = MCEstimate::from_real(pairs.iter().map(|p| p.0 - p.1));
    Ok(DualityCheck { lhs: lhs.mean().re, rhs: rhs.mean().re, ci: if n > 1 { diff.ci() } else { f64::INFINITY } })
}

/// Time change `s ↦ ⟨M⟩_s` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum QvProfile {
    /// `⟨M⟩_s = total·s`
    Deterministic { total: f64 },
    /// Piecewise linear through `(times[i], values[i])`, `times` from 0 to 1.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
    /// `⟨M⟩_s = (1 + spread·(U − ½))·s` with `U` uniform per sample.
    RandomTotal { spread: f64 },
    /// `d⟨M⟩_s = (1 + amplitude·tanh(M_s)) ds`, adapted to the martingale.
    Adaptive { amplitude: f64 },
}

impl QvProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            QvProfile::Deterministic { total } => ensure_positive("qv.total", *total),
            QvProfile::Tabulated { times, values } => {
                if times.len() < 2 || times.len() != values.len() {
                    return Err(invalid("qv.profile", "need matching time and value lists of length >= 2"));
                }
                if times[0] != 0.0 || *times.last().unwrap() != 1.0 || times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("qv.profile", "times must increase from 0 to 1"));
                }
                if values[0] != 0.0 || values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(invalid("qv.profile", "a quadratic variation must start at 0 and be non-decreasing"));
                }
                Ok(())
            }
            QvProfile::RandomTotal { spread } => {
                if !(0.0..2.0).contains(spread) {
                    return Err(invalid("qv.spread", "must lie in [0, 2) to keep the total positive"));
                }
                Ok(())
            }
            QvProfile::Adaptive { amplitude } => {
                if !(0.0..1.0).contains(&amplitude.abs()) {
                    return Err(invalid("qv.amplitude", "|amplitude| < 1 keeps the time change increasing"));
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            QvProfile::Deterministic { total } => format!("deterministic(total={total})"),
            QvProfile::Tabulated { .. } => "tabulated".into(),
            QvProfile::RandomTotal { spread } => format!("random_total(spread={spread})"),
            QvProfile::Adaptive { amplitude } => format!("adaptive(amplitude={amplitude})"),
        }
    }

    fn tabulated_at(times: &[f64], values: &[f64], s: f64) -> f64 {
        let i = times.partition_point(|&t| t <= s).clamp(1, times.len() - 1);
        let (t0, t1) = (times[i - 1], times[i]);
        values[i - 1] + (values[i] - values[i - 1]) * (s - t0) / (t1 - t0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCLTRow {
    pub profile: String,
    /// `|E{f(M₁) − f(W₁) − ½f''(M_τ)(⟨M⟩₁ − 1)}|`
    pub lhs: f64,
    pub lhs_ci: f64,
    /// `E{|⟨M⟩₁ − 1|^{3/2}}`
    pub rhs: f64,
    /// `lhs/rhs`, `None` when `rhs = 0`.
    pub ratio: Option<f64>,
    /// 95% Monte Carlo resolution of a single `e^{iW₁}` average.
    pub noise_floor: f64,
}

/// Compares a time-changed Brownian motion with a standard one for `f = e^{ix}`.
/// Both are driven by the same normals (`ΔM_n = √Δ⟨M⟩_n Z_n`,
/// `ΔW_n = √ds Z_n`); `τ` is the last grid time with `⟨M⟩ ≤ 1`.
pub fn mclt_bound_check(profiles: &[QvProfile], steps: usize, n: usize, seed: u64) -> Result<Vec<MCLTRow>> {
    if steps == 0 || n == 0 {
        return Err(invalid("mclt", "steps and sample count must be positive"));
    }
    for p in profiles {
        p.validate()?;
    }
    let ds = 1.0 / steps as f64;
    profiles
        .iter()
        .map(|profile| {
            let draws: Vec<(Complex64, f64)> = draw_blocks(n, &[seed, rng::tag::SAMPLE], |r| {
                let total = match profile {
                    QvProfile::RandomTotal { spread } => 1.0 + spread * (r.gen::<f64>() - 0.5),
                    _ => 0.0,
                };
                let (mut m, mut w, mut qv) = (0.0f64, 0.0f64, 0.0f64);
                let mut m_tau = 0.0;
                for k in 0..steps {
                    let z: f64 = StandardNormal.sample(r);
                    let s1 = (k + 1) as f64 * ds;
                    let next = match profile {
                        QvProfile::Deterministic { total } => total * s1,
                        QvProfile::Tabulated { times, values } => QvProfile::tabulated_at(times, values, s1),
                        QvProfile::RandomTotal { .. } => total * s1,
                        QvProfile::Adaptive { amplitude } => qv + (1.0 + amplitude * m.tanh()) * ds,
                    };
                    let dq = (next - qv).max(0.0);
                    if qv <= 1.0 {
                        m_tau = m;
                    }
                    m += dq.sqrt() * z;
                    w += ds.sqrt() * z;
                    qv = next;
                }
                if qv <= 1.0 {
                    m_tau = m;
                }
                let sample = Complex64::from_polar(1.0, m) - Complex64::from_polar(1.0, w)
                    + 0.5 * Complex64::from_polar(1.0, m_tau) * (qv - 1.0);
                (sample, (qv - 1.0).abs().powf(1.5))
            });
            let lhs = MCEstimate::from_samples(draws.iter().map(|d| d.0));
            let rhs = draws.iter().map(|d| d.1).sum::<f64>() / n as f64;
            let l = lhs.mean().norm();
            Ok(MCLTRow {
                profile: profile.label(),
                lhs: l,
                lhs_ci: lhs.ci(),
                rhs,
                ratio: (rhs > 0.0).then(|| l / rhs),
                noise_floor: super::Z95 * ((1.0 - (-1.0f64).exp()) / n as f64).sqrt(),
            })
        })
        .collect()
}
