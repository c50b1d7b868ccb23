//! Variance of the d = 3 fluctuation field at a point.
//!
//! Writing `a = t − s`, `b = t − u`, the propagated initial data collapse to
//! `𝒢_{t−s}(x−y) u_hom(s, y) = u_hom(t, x)·N(y; m_s, v_s)` for the Gaussian
//! initial conditions supported here, so both variances are
//! `u_hom(t,x)² ∫∫ K(a, b) da db` with
//! `K = (2π)^{-3} ∫ R̂(εξ) e^{-(v_a+v_b)|ξ|²/2} cos(ξ·Δm) dξ`.
//! The `(a, b)` integrand is singular at the corner `a = b = 0`; it is
//! integrated after the substitution `a = tα²`, `b = aγ`, which absorbs the
//! `(a+b)^{-3/2}` blow-up, with geometric panels in `α` around `ε`.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_positive, invalid, Error, Result};
use crate::feynman_kac::MCEstimate;
use crate::homogenization::{dist2, InitialCondition};
use crate::parallel::mc_blocks;
use crate::quadrature::{composite_rule, gauss_legendre};
use crate::random_field::{SpectrumFamily, SpectrumModel};
use crate::rng;

fn check(spec: &SpectrumModel, f: &InitialCondition, t: f64, x: &[f64], sigma2: f64) -> Result<()> {
    if spec.dim() != 3 {
        return Err(Error::Dimension {
            dim: spec.dim(),
            reason: "the pointwise fluctuation variance is the d = 3 object".into(),
        });
    }
    ensure_positive("t", t)?;
    if x.len() != 3 {
        return Err(invalid("x", "expected 3 coordinates"));
    }
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(invalid("sigma2", "must be finite and >= 0"));
    }
    f.validate(3)
}

/// Limit variance `R̂(0) ∫∫∫ 𝒢_{t−s}(x−z)𝒢_{t−u}(x−z) u_hom(s,z) u_hom(u,z) dz ds du`.
pub fn var_limit(spec: &SpectrumModel, f: &InitialCondition, t: f64, x: &[f64], sigma2: f64) -> Result<f64> {
    check(spec, f, t, x, sigma2)?;
    let r0 = spec.at_origin();
    let damp = (-sigma2 * t).exp();
    match f {
        InitialCondition::Constant { value } => {
            // ∫∫ (2π(a+b))^{-3/2} da db = (2π)^{-3/2} 4√t (2 − √2)
            Ok(value * value * damp * r0 * (2.0 * PI).powf(-1.5) * 4.0 * t.sqrt() * (2.0 - 2f64.sqrt()))
        }
        InitialCondition::GaussianBump { .. } => {
            let geo = BumpGeometry::new(f, t, x);
            let u = (-0.5 * sigma2 * t).exp() * f.heat(t, x);
            let k = |a: f64, b: f64| {
                let (v, m2) = geo.at(a, b);
                r0 * normal3(m2, v)
            };
            Ok(u * u * corner_integral(t, 0.0, 1, k))
        }
    }
}

/// Finite-ε variance `∫∫∫∫ 𝒢𝒢 u_hom u_hom ε^{-3} R((y−z)/ε) dy dz ds du`.
pub fn var_eps(spec: &SpectrumModel, f: &InitialCondition, t: f64, x: &[f64], sigma2: f64, eps: f64) -> Result<f64> {
    check(spec, f, t, x, sigma2)?;
    ensure_positive("eps", eps)?;
    let damp = (-sigma2 * t).exp();
    match f {
        InitialCondition::Constant { value } => {
            // Δm = 0 and v_a = a: the (a, b) integral is done in closed form
            // per frequency, leaving (2(1 − e^{-tk²/2})/k²)² under R̂(εk).
            let s = eps / t.sqrt();
            let g = |q: f64| {
                let z = t * q * q / (2.0 * eps * eps);
                let h = if z < 1e-8 { t * (1.0 - 0.5 * z) } else { 2.0 * eps * eps * (-(-z).exp_m1()) / (q * q) };
                h * h
            };
            let breaks: Vec<f64> = [0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0].iter().map(|c| c * s).collect();
            let v = spec.radial_integral(g, &breaks, 1e-11)?;
            Ok(value * value * damp * v / ((2.0 * PI).powi(3) * eps.powi(3)))
        }
        InitialCondition::GaussianBump { .. } => {
            let geo = BumpGeometry::new(f, t, x);
            let u = (-0.5 * sigma2 * t).exp() * f.heat(t, x);
            let scale = eps * spec.correlation_length();
            let integral = match spec.family() {
                SpectrumFamily::GaussianBump { amplitude, width } => {
                    let e2 = (eps / width).powi(2);
                    corner_integral(t, scale, 1, |a, b| {
                        let (v, m2) = geo.at(a, b);
                        amplitude * normal3(m2, v + e2)
                    })
                }
                SpectrumFamily::PoissonInduced(_) => {
                    let kern = RadialKernel::new(spec, eps, t, geo.max_shift(t), 1);
                    corner_integral(t, scale, 1, |a, b| {
                        let (v, m2) = geo.at(a, b);
                        kern.eval(v, m2.sqrt())
                    })
                }
            };
            Ok(u * u * integral)
        }
    }
}

/// `N(m; 0, v·I₃)` as a function of `|m|²`.
fn normal3(m2: f64, v: f64) -> f64 {
    (2.0 * PI * v).powf(-1.5) * (-0.5 * m2 / v).exp()
}

/// Mean and variance of the Gaussian factor `N(y; m_s, v_s)` for a bump
/// initial condition of width `w` centered at `c`.
struct BumpGeometry {
    w2: f64,
    t: f64,
    offset2: f64,
}

impl BumpGeometry {
    fn new(f: &InitialCondition, t: f64, x: &[f64]) -> Self {
        match f {
            InitialCondition::GaussianBump { center, width, .. } => {
                Self { w2: width * width, t, offset2: dist2(x, center) }
            }
            InitialCondition::Constant { .. } => Self { w2: f64::INFINITY, t, offset2: 0.0 },
        }
    }

    fn var(&self, a: f64) -> f64 {
        if self.w2.is_infinite() {
            a
        } else {
            a * (self.w2 + self.t - a) / (self.w2 + self.t)
        }
    }

    /// `(v_a + v_b, |m_a − m_b|²)`
    fn at(&self, a: f64, b: f64) -> (f64, f64) {
        let v = self.var(a) + self.var(b);
        let m2 = if self.w2.is_infinite() { 0.0 } else { self.offset2 * ((b - a) / (self.t + self.w2)).powi(2) };
        (v, m2)
    }

    fn max_shift(&self, t: f64) -> f64 {
        if self.w2.is_infinite() {
            0.0
        } else {
            self.offset2.sqrt() * t / (t + self.w2)
        }
    }
}

/// `∫_0^t ∫_0^t k(a, b) da db` for `k` symmetric with an integrable
/// `(a+b)^{-3/2}` corner singularity smoothed on the scale `a ~ scale²`.
fn corner_integral(t: f64, scale: f64, refine: usize, k: impl Fn(f64, f64) -> f64) -> f64 {
    let order = 16 * refine;
    let (gx, gw) = gauss_legendre(order);
    // α breaks: geometric around α_ε = scale/√t, then uniform up to 1
    let mut breaks = vec![0.0];
    let alpha_eps = scale / t.sqrt();
    if alpha_eps > 0.0 && alpha_eps < 1.0 {
        let mut a = alpha_eps / 64.0;
        while a < 1.0 {
            if a > 1e-12 {
                breaks.push(a);
            }
            a *= 2.0_f64.powf(1.0 / refine as f64);
        }
    } else {
        let mut a = 1.0 / 1024.0;
        while a < 1.0 {
            breaks.push(a);
            a *= 2.0;
        }
    }
    breaks.push(1.0);
    let gamma_rule = composite_rule(0.0, 1.0, 2 * refine, order);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (xi, wi) in gx.iter().zip(&gw) {
            let alpha = c + h * xi;
            let a = t * alpha * alpha;
            let jac = 2.0 * t * t * alpha.powi(3);
            let inner: f64 = gamma_rule.iter().map(|&(g, gwt)| gwt * k(a, a * g)).sum();
            total += h * wi * jac * inner;
        }
    }
    // the triangle b ≤ a counted twice by symmetry
    2.0 * total
}

/// `K(V, |Δm|) = (2π)^{-3} ∫ R̂(εξ) e^{-V|ξ|²/2} cos(ξ·Δm) dξ` on a fixed
/// radial rule in `q = ε|ξ|`, for spectra without a closed form.
struct RadialKernel {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    eps: f64,
}

impl RadialKernel {
    fn new(spec: &SpectrumModel, eps: f64, t: f64, max_shift: f64, refine: usize) -> Self {
        let qmax = spec.radial_max();
        let ell = spec.correlation_length();
        let mut width = 0.5 / ell;
        if max_shift > 0.0 {
            // a 16-point panel resolves a little over one period 2πε/shift of the sinc
            width = width.min(8.0 * eps / max_shift);
        }
        let mut breaks = vec![0.0];
        let mut q = eps / (64.0 * (2.0 * t).sqrt());
        while q < qmax {
            let last = *breaks.last().unwrap();
            while q - last > width && *breaks.last().unwrap() + width < q {
                let b = *breaks.last().unwrap() + width;
                breaks.push(b);
            }
            breaks.push(q);
            q *= 2.0;
        }
        while *breaks.last().unwrap() + width < qmax {
            let b = *breaks.last().unwrap() + width;
            breaks.push(b);
        }
        breaks.push(qmax);
        let (gx, gw) = gauss_legendre(16 * refine);
        let norm = 4.0 * PI / ((2.0 * PI).powi(3) * eps.powi(3));
        let (mut nodes, mut weights) = (Vec::new(), Vec::new());
        for w in breaks.windows(2) {
            let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            if h <= 0.0 {
                continue;
            }
            for (xi, wi) in gx.iter().zip(&gw) {
                let q = c + h * xi;
                nodes.push(q);
                weights.push(norm * h * wi * spec.density(q) * q * q);
            }
        }
        Self { nodes, weights, eps }
    }

    fn eval(&self, v: f64, shift: f64) -> f64 {
        let c = v / (2.0 * self.eps * self.eps);
        let s = shift / self.eps;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&q, &w)| {
                let z = q * s;
                let sinc = if z < 1e-6 { 1.0 - z * z / 6.0 } else { z.sin() / z };
                w * sinc * (-c * q * q).exp()
            })
            .sum()
    }
}

/// Monte Carlo value of the Wiener-integral variance `R̂(0) ∫ F(y)² dy` for
/// constant initial data, `F(y) = c e^{-σ²t/2} erfc(|y|/√(2t))/(2π|y|)`.
/// The radius is drawn half-normal with variance `2t`, which keeps the
/// weight `F²·4πr²/p(r)` bounded at the origin.
pub fn wiener_variance_mc(spec: &SpectrumModel, value: f64, t: f64, sigma2: f64, n: usize, seed: u64) -> Result<MCEstimate> {
    if spec.dim() != 3 {
        return Err(Error::Dimension { dim: spec.dim(), reason: "the Wiener representation here is three-dimensional".into() });
    }
    ensure_positive("t", t)?;
    if n < 2 {
        return Err(invalid("n", "at least two samples are required"));
    }
    let r0 = spec.at_origin();
    let amp = value * (-0.5 * sigma2 * t).exp();
    let sr = (2.0 * t).sqrt();
    Ok(mc_blocks(n, &[seed, rng::tag::SAMPLE], |g| {
        let z: f64 = StandardNormal.sample(g);
        let r = (sr * z).abs();
        let p = 2.0 / (sr * (2.0 * PI).sqrt()) * (-0.5 * r * r / (sr * sr)).exp();
        let fr = amp * statrs::function::erf::erfc(r / (2.0 * t).sqrt()) / (2.0 * PI);
        // F² r² = fr², so F²·4πr²/p = 4π fr²/p
        (r0 * 4.0 * PI * fr * fr / p).into()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogenization::sigma2 as sigma2_of;
    use crate::random_field::ShapeFunction;
    use approx::assert_relative_eq;

    fn gauss() -> SpectrumModel {
        SpectrumModel::gaussian_bump(3, 1.0, 1.0).unwrap()
    }

    fn bump() -> InitialCondition {
        InitialCondition::GaussianBump { center: vec![0.3, -0.2, 0.1], width: 0.7, height: 1.5 }
    }

    #[test]
    fn zero_spectrum_gives_zero() {
        let s = SpectrumModel::gaussian_bump(3, 0.0, 1.0).unwrap();
        let f = InitialCondition::Constant { value: 1.0 };
        assert_eq!(var_limit(&s, &f, 1.0, &[0.0; 3], 0.0).unwrap(), 0.0);
        assert_eq!(var_eps(&s, &f, 1.0, &[0.0; 3], 0.0, 0.1).unwrap(), 0.0);
        assert_eq!(var_limit(&s, &bump(), 1.0, &[0.0; 3], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_limit_matches_wiener_mc() {
        let s = gauss();
        let s2 = sigma2_of(&s).unwrap();
        let f = InitialCondition::Constant { value: 1.0 };
        let exact = var_limit(&s, &f, 1.0, &[0.0; 3], s2).unwrap();
        let mc = wiener_variance_mc(&s, 1.0, 1.0, s2, 1_000_000, 5).unwrap();
        assert!((mc.mean().re - exact).abs() < 0.01 * exact, "{} vs {exact}", mc.mean().re);
        assert!((mc.mean().re - exact).abs() < 4.0 * mc.ci());
    }

    #[test]
    fn bump_limit_tends_to_constant_for_wide_bump() {
        // the corner quadrature against the closed form: a very wide bump is
        // locally constant
        let s = gauss();
        let wide = InitialCondition::GaussianBump { center: vec![0.0; 3], width: 1e4, height: 1.0 };
        let c = InitialCondition::Constant { value: 1.0 };
        let a = var_limit(&s, &wide, 1.0, &[0.0; 3], 0.2).unwrap();
        let b = var_limit(&s, &c, 1.0, &[0.0; 3], 0.2).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-6);
        let a = var_eps(&s, &wide, 1.0, &[0.0; 3], 0.2, 0.1).unwrap();
        let b = var_eps(&s, &c, 1.0, &[0.0; 3], 0.2, 0.1).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-5);
    }

    #[test]
    fn corner_quadrature_is_converged() {
        let geo = BumpGeometry::new(&bump(), 1.0, &[0.0; 3]);
        for scale in [0.0, 0.05, 0.4] {
            let k = |a: f64, b: f64| {
                let (v, m2) = geo.at(a, b);
                normal3(m2, v + scale * scale)
            };
            let coarse = corner_integral(1.0, scale, 1, k);
            let fine = corner_integral(1.0, scale, 2, k);
            assert_relative_eq!(coarse, fine, max_relative = 1e-6);
        }
    }

    #[test]
    fn radial_kernel_matches_gaussian_closed_form() {
        let s = gauss();
        let eps = 0.1;
        let kern = RadialKernel::new(&s, eps, 1.0, 0.3, 1);
        for (v, m) in [(1e-3, 0.0), (0.05, 0.1), (1.0, 0.3), (2.0, 0.0)] {
            let exact = normal3(m * m, v + eps * eps);
            assert_relative_eq!(kern.eval(v, m), exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn eps_variance_converges_to_limit() {
        let s = gauss();
        let s2 = sigma2_of(&s).unwrap();
        for f in [InitialCondition::Constant { value: 1.0 }, bump()] {
            let lim = var_limit(&s, &f, 1.0, &[0.0; 3], s2).unwrap();
            let mut prev = f64::INFINITY;
            for eps in [0.4, 0.2, 0.1, 0.05, 0.0125, 0.003125] {
                let v = var_eps(&s, &f, 1.0, &[0.0; 3], s2, eps).unwrap();
                let gap = (v - lim).abs() / lim;
                assert!(gap < prev, "gap {gap} at {eps} not below {prev}");
                prev = gap;
            }
            assert!(prev < 0.01);
        }
    }

    #[test]
    fn constant_eps_variance_small_eps_expansion() {
        // var_ε/var = 1 − c₁ε + O(ε²) with c₁ = √2 π ∫R̂/|ξ|² / (...); check the
        // ratio of gaps at ε and ε/2 approaches 2 (first order convergence)
        let s = gauss();
        let f = InitialCondition::Constant { value: 1.0 };
        let lim = var_limit(&s, &f, 1.0, &[0.0; 3], 0.0).unwrap();
        let g1 = lim - var_eps(&s, &f, 1.0, &[0.0; 3], 0.0, 0.01).unwrap();
        let g2 = lim - var_eps(&s, &f, 1.0, &[0.0; 3], 0.0, 0.005).unwrap();
        assert!((g1 / g2 - 2.0).abs() < 0.05, "{}", g1 / g2);
    }

    #[test]
    fn variance_is_linear_in_spectrum() {
        let shape = ShapeFunction::new(3, 1.0, 1.0).unwrap();
        let p = SpectrumModel::poisson_induced(shape).unwrap();
        for s in [gauss(), p] {
            let s2 = s.scaled(2.0).unwrap();
            for f in [InitialCondition::Constant { value: 1.0 }, bump()] {
                let a = var_limit(&s, &f, 1.0, &[0.0; 3], 0.1).unwrap();
                let b = var_limit(&s2, &f, 1.0, &[0.0; 3], 0.1).unwrap();
                assert_relative_eq!(b, 2.0 * a, max_relative = 1e-6);
                let a = var_eps(&s, &f, 1.0, &[0.0; 3], 0.1, 0.2).unwrap();
                let b = var_eps(&s2, &f, 1.0, &[0.0; 3], 0.1, 0.2).unwrap();
                assert_relative_eq!(b, 2.0 * a, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn poisson_bump_variance_converges() {
        let shape = ShapeFunction::new(3, 0.5, 1.0).unwrap();
        let s = SpectrumModel::poisson_induced(shape).unwrap();
        let lim = var_limit(&s, &bump(), 1.0, &[0.0; 3], 0.0).unwrap();
        let v = var_eps(&s, &bump(), 1.0, &[0.0; 3], 0.0, 0.01).unwrap();
        assert!((v - lim).abs() < 0.05 * lim, "{v} vs {lim}");
        assert!(v < lim);
    }

    #[test]
    fn rejects_other_dimensions() {
        let s = SpectrumModel::gaussian_bump(4, 1.0, 1.0).unwrap();
        let f = InitialCondition::Constant { value: 1.0 };
        assert!(matches!(var_limit(&s, &f, 1.0, &[0.0; 4], 0.0), Err(Error::Dimension { .. })));
    }
}
