//! Effective constant, homogenized solution and resolvent Green's function.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_positive, invalid, Error, Result};
use crate::feynman_kac::MCEstimate;
use crate::parallel::mc_blocks;
use crate::quadrature;
use crate::random_field::SpectrumModel;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Constant { value: f64 },
    /// `height·exp(-|x−center|²/(2·width²))`
    GaussianBump { center: Vec<f64>, width: f64, height: f64 },
}

impl InitialCondition {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            InitialCondition::Constant { value } if !value.is_finite() => {
                Err(invalid("initial.value", "must be finite"))
            }
            InitialCondition::GaussianBump { center, width, height } => {
                if center.len() != dim {
                    return Err(invalid("initial.center", format!("expected {dim} coordinates")));
                }
                ensure_positive("initial.width", *width)?;
                if !height.is_finite() {
                    return Err(invalid("initial.height", "must be finite"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            InitialCondition::Constant { value } => *value,
            InitialCondition::GaussianBump { center, width, height } => {
                height * (-0.5 * dist2(x, center) / (width * width)).exp()
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            InitialCondition::Constant { .. } => vec![0.0; x.len()],
            InitialCondition::GaussianBump { center, width, .. } => {
                let v = self.value(x);
                x.iter().zip(center).map(|(a, c)| -v * (a - c) / (width * width)).collect()
            }
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            InitialCondition::Constant { value } => value.abs(),
            InitialCondition::GaussianBump { height, .. } => height.abs(),
        }
    }

    /// `(q_t ⋆ f)(x)` with `q_t` the heat kernel of `½Δ`.
    pub fn heat(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            InitialCondition::Constant { value } => *value,
            InitialCondition::GaussianBump { center, width, height } => {
                let v = width * width + t;
                let d = x.len() as f64;
                height * (width * width / v).powf(d / 2.0) * (-0.5 * dist2(x, center) / v).exp()
            }
        }
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// `σ² = 4(2π)^{-d} ∫ R̂(ξ)/|ξ|² dξ`
pub fn sigma2(spec: &SpectrumModel) -> Result<f64> {
    let d = spec.dim();
    if d < 3 {
        return Err(Error::Dimension { dim: d, reason: "σ² diverges unless d >= 3".into() });
    }
    let v = spec.radial_integral(|r| 1.0 / (r * r), &[], 1e-12)?;
    Ok(4.0 * v / (2.0 * PI).powi(d as i32))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizedModel {
    sigma2: f64,
    dim: usize,
    initial: InitialCondition,
}

impl HomogenizedModel {
    pub fn new(spec: &SpectrumModel, initial: InitialCondition) -> Result<Self> {
        Self::with_sigma2(spec.dim(), sigma2(spec)?, initial)
    }

    pub fn with_sigma2(dim: usize, sigma2: f64, initial: InitialCondition) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(invalid("sigma2", "must be finite and >= 0"));
        }
        initial.validate(dim)?;
        Ok(Self { sigma2, dim, initial })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn initial(&self) -> &InitialCondition {
        &self.initial
    }

    /// `u_hom(t, x) = e^{-σ²t/2}(q_t ⋆ f)(x)`
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        (-0.5 * self.sigma2 * t).exp() * self.initial.heat(t, x)
    }
}

pub fn u_hom(model: &HomogenizedModel, t: f64, x: &[f64]) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("t", "must be finite and >= 0"));
    }
    if x.len() != model.dim() {
        return Err(invalid("x", format!("expected {} coordinates", model.dim())));
    }
    Ok(model.value(t, x))
}

/// Monte Carlo of `E_W{f(x + W_t)} e^{-σ²t/2}` over `n` Gaussian endpoints.
pub fn u_hom_mc_check(model: &HomogenizedModel, t: f64, x: &[f64], n: usize, seed: u64) -> Result<MCEstimate> {
    u_hom(model, t, x)?;
    if n == 0 {
        return Err(invalid("n", "at least one sample is required"));
    }
    let damp = (-0.5 * model.sigma2 * t).exp();
    let sd = t.sqrt();
    let d = model.dim();
    Ok(mc_blocks(n, &[seed, rng::tag::SAMPLE], |g| {
        let y: Vec<f64> = (0..d)
            .map(|k| {
                let z: f64 = StandardNormal.sample(g);
                x[k] + sd * z
            })
            .collect();
        Complex64::new(model.initial.value(&y) * damp, 0.0)
    }))
}

/// Green's function of `λ − ½Δ` in `R^d` at `x ≠ 0`.
pub fn green_lambda(x: &[f64], lambda: f64, dim: usize) -> Result<f64> {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(invalid("x", "Green's function is singular at the origin"));
    }
    green_lambda_radial(r, lambda, dim)
}

pub fn green_lambda_radial(r: f64, lambda: f64, dim: usize) -> Result<f64> {
    ensure_positive("lambda", lambda)?;
    ensure_positive("|x|", r)?;
    if dim == 0 {
        return Err(invalid("dim", "must be >= 1"));
    }
    let k = (2.0 * lambda).sqrt();
    if dim == 3 {
        return Ok((-k * r).exp() / (2.0 * PI * r));
    }
    // G(r) = ∫_0^∞ e^{-λs} (2πs)^{-d/2} e^{-r²/(2s)} ds, in u = ln s.
    let h = dim as f64 / 2.0;
    let log_integrand = |u: f64| {
        let s = u.exp();
        u - lambda * s - h * (2.0 * PI * s).ln() - r * r / (2.0 * s)
    };
    let s_star = (-(h - 1.0) + ((h - 1.0).powi(2) + 2.0 * lambda * r * r).sqrt()) / (2.0 * lambda);
    let s_star = if s_star > 0.0 { s_star } else { r * r / 2.0 };
    let u_star = s_star.ln();
    let peak = log_integrand(u_star);
    let lo = u_star.min((r * r / 2.0).ln()) - 8.0;
    let hi = u_star.max(-lambda.ln()) + 6.0;
    let v = quadrature::integrate_pieces(
        |u| (log_integrand(u) - peak).exp(),
        &[lo, u_star - 2.0, u_star, u_star + 2.0, hi],
        1e-11,
        0.0,
    )?;
    Ok(v * peak.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::quadrature::sphere_mean_cos;

    fn default_spec() -> SpectrumModel {
        SpectrumModel::gaussian_bump(3, 1.0, 1.0).unwrap()
    }

    #[test]
    fn sigma2_gaussian_bump_closed_form() {
        let closed = 2.0 * (PI / 2.0).sqrt() / (PI * PI);
        assert_relative_eq!(sigma2(&default_spec()).unwrap(), closed, max_relative = 1e-10);
        assert_relative_eq!(closed, 0.253_975_, max_relative = 1e-5);
    }

    #[test]
    fn sigma2_zero_and_scaling() {
        let s = default_spec();
        assert_eq!(sigma2(&s.scaled(0.0).unwrap()).unwrap(), 0.0);
        for c in [0.5, 2.0, 7.3] {
            assert_relative_eq!(
                sigma2(&s.scaled(c).unwrap()).unwrap(),
                c * sigma2(&s).unwrap(),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn sigma2_poisson_matches_nested_quadrature() {
        use crate::random_field::ShapeFunction;
        let shape = ShapeFunction::new(3, 1.0, 1.0).unwrap();
        let spec = SpectrumModel::poisson_induced(shape.clone()).unwrap();
        // independent route: φ̂ by direct 1-D sinc transform, then 4π∫|φ̂|²dk
        let phi_hat = |k: f64| {
            quadrature::integrate(
                |s| 4.0 * PI * s * s * shape.radial(s) * if k * s == 0.0 { 1.0 } else { (k * s).sin() / (k * s) },
                0.0,
                1.0,
                1e-12,
            )
            .unwrap()
        };
        let outer = quadrature::integrate(|k| 4.0 * PI * phi_hat(k).powi(2), 0.0, 80.0, 1e-9).unwrap();
        let oracle = 4.0 * outer / (2.0 * PI).powi(3);
        assert_relative_eq!(sigma2(&spec).unwrap(), oracle, max_relative = 1e-4);
    }

    #[test]
    fn u_hom_closed_forms() {
        let c = HomogenizedModel::with_sigma2(3, 0.4, InitialCondition::Constant { value: 1.0 }).unwrap();
        assert_relative_eq!(c.value(2.0, &[1.0, 2.0, 3.0]), (-0.4_f64).exp());
        let bump = InitialCondition::GaussianBump { center: vec![0.0; 3], width: 1.0, height: 1.0 };
        let m = HomogenizedModel::with_sigma2(3, 0.0, bump.clone()).unwrap();
        let x = [0.3, -1.0, 0.5];
        let t = 0.7;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        assert_relative_eq!(
            m.value(t, &x),
            (1.0 + t).powf(-1.5) * (-r2 / (2.0 * (1.0 + t))).exp(),
            max_relative = 1e-14
        );
        assert_eq!(m.value(0.0, &x), bump.value(&x));
    }

    #[test]
    fn u_hom_semigroup() {
        let bump = InitialCondition::GaussianBump { center: vec![0.2, 0.0, -0.1], width: 0.8, height: 2.0 };
        let m = HomogenizedModel::with_sigma2(3, 0.3, bump).unwrap();
        let (t, s) = (0.6f64, 0.9);
        let x = [0.5, 0.1, 0.0];
        // the time-t profile is again a Gaussian bump: evolve it for time s
        let v = 0.64 + t;
        let h = 2.0 * (0.64f64 / v).powf(1.5) * (-0.15f64 * t).exp();
        let evolved = InitialCondition::GaussianBump { center: vec![0.2, 0.0, -0.1], width: v.sqrt(), height: h };
        let stepped = HomogenizedModel::with_sigma2(3, 0.3, evolved).unwrap().value(s, &x);
        assert_relative_eq!(m.value(t + s, &x), stepped, max_relative = 1e-8);
    }

    #[test]
    fn u_hom_monte_carlo() {
        let bump = InitialCondition::GaussianBump { center: vec![0.0; 3], width: 1.0, height: 1.0 };
        let m = HomogenizedModel::new(&default_spec(), bump).unwrap();
        let e = u_hom_mc_check(&m, 1.0, &[0.0; 3], 100_000, 5).unwrap();
        assert!((e.mean().re - m.value(1.0, &[0.0; 3])).abs() <= 4.0 * e.ci());
        let one = HomogenizedModel::new(&default_spec(), InitialCondition::Constant { value: 1.0 }).unwrap();
        let e = u_hom_mc_check(&one, 1.0, &[0.0; 3], 1000, 5).unwrap();
        assert_eq!(e.mean().re, one.value(1.0, &[0.0; 3]));
        assert_eq!(e.variance(), 0.0);
        let single = u_hom_mc_check(&one, 1.0, &[0.0; 3], 1, 5).unwrap();
        assert!(single.ci().is_infinite());
    }

    #[test]
    fn green_three_dimensional() {
        assert_relative_eq!(
            green_lambda(&[1.0, 0.0, 0.0], 0.5, 3).unwrap(),
            (-1.0f64).exp() / (2.0 * PI),
            max_relative = 1e-15
        );
        assert!(green_lambda(&[0.0; 3], 0.5, 3).is_err());
        let r = 1e-7;
        assert_relative_eq!(green_lambda(&[r, 0.0, 0.0], 0.5, 3).unwrap() * r, 1.0 / (2.0 * PI), max_relative = 1e-6);
        assert!(green_lambda(&[1.0, 0.0, 0.0], 1e6, 3).unwrap() < 1e-12);
        assert!(green_lambda(&[1.0, 0.0, 0.0], 1e6, 5).unwrap() < 1e-12);
    }

    #[test]
    fn green_five_dimensional_closed_form() {
        // G = e^{-κr}(1+κr)/(4π²r³) with κ = √(2λ)
        for &(r, l) in &[(0.1, 0.5), (1.0, 0.5), (3.0, 2.0), (0.5, 1e-4), (20.0, 1e-6)] {
            let k = (2.0f64 * l).sqrt();
            let closed = (-k * r).exp() * (1.0 + k * r) / (4.0 * PI * PI * r.powi(3));
            assert_relative_eq!(green_lambda_radial(r, l, 5).unwrap(), closed, max_relative = 1e-8);
        }
    }

    #[test]
    fn green_resolvent_fourier_inversion() {
        // (2π)^{-d} ∫ e^{iξ·x}/(λ+|ξ|²/2) dξ, with a Gaussian regulator whose
        // contribution is removed by Richardson-free choice of a tiny width
        for &(d, r, l) in &[(4usize, 0.8, 0.5), (5, 1.2, 1.0), (3, 1.0, 0.5)] {
            let g = green_lambda_radial(r, l, d).unwrap();
            let reg = 1e-3;
            let inv = quadrature::integrate(
                |k| {
                    crate::quadrature::sphere_area(d) * k.powi(d as i32 - 1) * sphere_mean_cos(d, k * r)
                        * (-0.5 * reg * k * k).exp()
                        / (l + 0.5 * k * k)
                },
                0.0,
                400.0,
                1e-10,
            )
            .unwrap()
                / (2.0 * PI).powi(d as i32);
            // the regulator shifts the result by O(reg); compare to the
            // regulated Green's function, which is G convolved with q_reg
            let shifted = regulated_green(r, l, d, reg);
            assert_relative_eq!(inv, shifted, max_relative = 1e-5);
            assert_relative_eq!(shifted, g, max_relative = 5e-3);
        }
    }

    /// ∫_0^∞ e^{-λs} q_{s+reg}(r) ds: Green's function smoothed by the heat kernel.
    fn regulated_green(r: f64, lambda: f64, d: usize, reg: f64) -> f64 {
        let h = d as f64 / 2.0;
        (lambda * reg).exp()
            * quadrature::integrate_pieces(
                |u: f64| {
                    let s = u.exp();
                    (u - lambda * s - h * (2.0 * PI * s).ln() - r * r / (2.0 * s)).exp()
                        * if s >= reg { 1.0 } else { 0.0 }
                },
                &[reg.ln(), 0.0, 10.0, 60.0],
                1e-12,
                0.0,
            )
            .unwrap()
    }
}
