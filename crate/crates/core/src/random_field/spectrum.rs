use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::error::{ensure_positive, invalid, Error, Result};
use crate::quadrature::{self, composite_rule, sphere_area, sphere_mean_cos};

/// Largest dimension the radial machinery is validated for.
pub const MAX_DIM: usize = 12;

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim < 3 {
        return Err(Error::Dimension {
            dim,
            reason: "homogenization with a |ξ|^-2 singular integrand requires d >= 3".into(),
        });
    }
    if dim > MAX_DIM {
        return Err(Error::Dimension {
            dim,
            reason: format!("dimensions above {MAX_DIM} are not supported"),
        });
    }
    Ok(())
}

/// Smooth compactly supported bump `φ(x) = c·exp(-1/(1-|x/r₀|²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFunction {
    dim: usize,
    radius: f64,
    scale: f64,
    integral: f64,
}

fn bump_profile(u: f64) -> f64 {
    if u < 1.0 {
        (-1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

impl ShapeFunction {
    pub fn new(dim: usize, radius: f64, scale: f64) -> Result<Self> {
        check_dim(dim)?;
        ensure_positive("shape.radius", radius)?;
        if !scale.is_finite() || scale == 0.0 {
            return Err(invalid(
                "shape.scale",
                "c_φ = ∫φ must be nonzero so that the power spectrum is positive at the origin",
            ));
        }
        let area = sphere_area(dim);
        let radial = quadrature::integrate(
            |s| bump_profile(s / radius) * s.powi(dim as i32 - 1),
            0.0,
            radius,
            1e-13,
        )?;
        let integral = scale * area * radial;
        if integral == 0.0 || !integral.is_finite() {
            return Err(invalid("shape.scale", "shape integral vanished"));
        }
        Ok(Self { dim, radius, scale, integral })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `c_φ = ∫ φ`
    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Profile as a function of `|x|`.
    pub fn radial(&self, r: f64) -> f64 {
        self.scale * bump_profile(r / self.radius)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        self.radial(r2.sqrt())
    }

    /// Radial Fourier transform `φ̂(k) = ∫ φ(x) e^{-ik·x} dx` at `|k| = k`.
    pub fn fourier(&self, k: f64) -> f64 {
        let panels = 8 + (k * self.radius / 2.0).ceil() as usize;
        let rule = composite_rule(0.0, self.radius, panels, 20);
        let d = self.dim;
        let s: f64 = rule
            .iter()
            .map(|&(r, w)| w * self.radial(r) * r.powi(d as i32 - 1) * sphere_mean_cos(d, k * r))
            .sum();
        sphere_area(d) * s
    }

    /// `∫ φ(y) · m(y) dy` for a radial weight `m`.
    #[cfg(test)]
    pub(crate) fn radial_moment(&self, m: impl Fn(f64) -> f64) -> f64 {
        let rule = composite_rule(0.0, self.radius, 8, 16);
        let d = self.dim;
        sphere_area(d)
            * rule
                .iter()
                .map(|&(r, w)| w * self.radial(r) * r.powi(d as i32 - 1) * m(r))
                .sum::<f64>()
    }

    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        Self::new(self.dim, self.radius, scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumFamily {
    /// `R̂(ξ) = A·exp(-|ξ|²/(2ρ²))`
    GaussianBump { amplitude: f64, width: f64 },
    /// `R̂(ξ) = |φ̂(ξ)|²`
    PoissonInduced(ShapeFunction),
}

/// Tabulated radial CDF of `R̂(r) r^{d-1}`, used to draw frequencies.
#[derive(Debug)]
pub(crate) struct RadialTable {
    pub radii: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl RadialTable {
    pub fn invert(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let (r0, r1) = (self.radii[i - 1], self.radii[i]);
        if c1 > c0 {
            r0 + (r1 - r0) * (u - c0) / (c1 - c0)
        } else {
            r0
        }
    }
}

/// Isotropic power spectrum of a stationary mean-zero potential, normalized
/// so that `R(x) = (2π)^{-d} ∫ R̂(ξ) e^{iξ·x} dξ`.
#[derive(Debug, Clone)]
pub struct SpectrumModel {
    dim: usize,
    family: SpectrumFamily,
    radial_max: f64,
    table: Arc<OnceLock<RadialTable>>,
}

impl PartialEq for SpectrumModel {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.family == other.family
    }
}

impl SpectrumModel {
    /// Gaussian-bump spectrum. `amplitude = 0` is accepted as the degenerate
    /// zero potential.
    pub fn gaussian_bump(dim: usize, amplitude: f64, width: f64) -> Result<Self> {
        check_dim(dim)?;
        if !amplitude.is_finite() || amplitude < 0.0 {
            return Err(invalid("potential.amplitude", format!("must be >= 0, got {amplitude}")));
        }
        ensure_positive("potential.width", width)?;
        // e^{-r²/2ρ²} < 1e-40 beyond this radius.
        let radial_max = width * (80.0 * std::f64::consts::LN_10).sqrt();
        Ok(Self {
            dim,
            family: SpectrumFamily::GaussianBump { amplitude, width },
            radial_max,
            table: Arc::default(),
        })
    }

    pub fn poisson_induced(shape: ShapeFunction) -> Result<Self> {
        let dim = shape.dim();
        // Scan outward until |φ̂|² k^{d-1} has stayed below 1e-14 of its peak
        // over a long stretch.
        let step = 0.5 / shape.radius();
        let mut peak: f64 = 0.0;
        let mut quiet = 0usize;
        let mut k = 0.0;
        let mut last_loud = 0.0;
        while quiet < 200 {
            k += step;
            let v = shape.fourier(k).powi(2) * k.powi(dim as i32 - 1);
            peak = peak.max(v);
            if v > 1e-14 * peak {
                quiet = 0;
                last_loud = k;
            } else {
                quiet += 1;
            }
            if k > 1e4 / shape.radius() {
                return Err(Error::Quadrature("shape spectrum does not decay".into()));
            }
        }
        Ok(Self {
            dim,
            family: SpectrumFamily::PoissonInduced(shape),
            radial_max: last_loud + 10.0 * step,
            table: Arc::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &SpectrumFamily {
        &self.family
    }

    /// Radius beyond which `R̂` is treated as zero.
    pub fn radial_max(&self) -> f64 {
        self.radial_max
    }

    /// `R̂` at `|ξ| = r`.
    pub fn density(&self, r: f64) -> f64 {
        match &self.family {
            SpectrumFamily::GaussianBump { amplitude, width } => {
                amplitude * (-0.5 * r * r / (width * width)).exp()
            }
            SpectrumFamily::PoissonInduced(shape) => shape.fourier(r).powi(2),
        }
    }

    pub fn at_origin(&self) -> f64 {
        match &self.family {
            SpectrumFamily::GaussianBump { amplitude, .. } => *amplitude,
            SpectrumFamily::PoissonInduced(shape) => shape.integral().powi(2),
        }
    }

    /// Length over which the covariance decorrelates.
    pub fn correlation_length(&self) -> f64 {
        match &self.family {
            SpectrumFamily::GaussianBump { width, .. } => 1.0 / width,
            SpectrumFamily::PoissonInduced(shape) => shape.radius(),
        }
    }

    /// The spectrum `c·R̂`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !c.is_finite() || c < 0.0 {
            return Err(invalid("scale", "spectrum scaling must be >= 0"));
        }
        match &self.family {
            SpectrumFamily::GaussianBump { amplitude, width } => {
                Self::gaussian_bump(self.dim, amplitude * c, *width)
            }
            SpectrumFamily::PoissonInduced(shape) => {
                let scaled = shape.with_scale(shape.scale() * c.sqrt())?;
                Ok(Self {
                    dim: self.dim,
                    family: SpectrumFamily::PoissonInduced(scaled),
                    radial_max: self.radial_max,
                    table: Arc::default(),
                })
            }
        }
    }

    /// `|S^{d-1}| ∫_0^∞ R̂(r) g(r) r^{d-1} dr`, i.e. `∫ R̂(ξ) g(|ξ|) dξ`.
    /// `breaks` are extra split points where `g` varies rapidly.
    pub fn radial_integral(&self, g: impl Fn(f64) -> f64, breaks: &[f64], rel_tol: f64) -> Result<f64> {
        let rmax = self.radial_max;
        let mut pts: Vec<f64> = std::iter::once(0.0)
            .chain(breaks.iter().copied().filter(|&b| b > 0.0 && b < rmax))
            .chain(std::iter::once(rmax))
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let d = self.dim as i32;
        let v = match &self.family {
            SpectrumFamily::GaussianBump { amplitude, .. } if *amplitude == 0.0 => 0.0,
            _ => quadrature::integrate_pieces(
                |r| self.density(r) * g(r) * r.powi(d - 1),
                &pts,
                rel_tol,
                1e-300,
            )?,
        };
        Ok(sphere_area(self.dim) * v)
    }

    /// `∫ R̂ = (2π)^d R(0)`
    pub fn total_mass(&self) -> f64 {
        match &self.family {
            SpectrumFamily::GaussianBump { amplitude, width } => {
                amplitude * (2.0 * PI * width * width).powf(self.dim as f64 / 2.0)
            }
            SpectrumFamily::PoissonInduced(_) => self
                .radial_integral(|_| 1.0, &[], 1e-12)
                .expect("spectrum mass quadrature"),
        }
    }

    pub(crate) fn radial_table(&self) -> &RadialTable {
        self.table.get_or_init(|| {
            let n = 8192;
            let d = self.dim as i32;
            let h = self.radial_max / n as f64;
            let radii: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
            let dens: Vec<f64> = radii.iter().map(|&r| self.density(r) * r.powi(d - 1)).collect();
            let mut cdf = vec![0.0; n + 1];
            for i in 1..=n {
                cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i] + dens[i - 1]);
            }
            let total = cdf[n];
            if total > 0.0 {
                cdf.iter_mut().for_each(|c| *c /= total);
            }
            RadialTable { radii, cdf }
        })
    }
}

/// Covariance `R(x)` of a potential with the given spectrum.
pub fn covariance(spec: &SpectrumModel, x: &[f64]) -> f64 {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    covariance_radial(spec, r)
}

pub fn covariance_radial(spec: &SpectrumModel, r: f64) -> f64 {
    let d = spec.dim();
    match spec.family() {
        SpectrumFamily::GaussianBump { amplitude, width } => {
            amplitude * width.powi(d as i32) * (2.0 * PI).powf(-(d as f64) / 2.0)
                * (-0.5 * width * width * r * r).exp()
        }
        SpectrumFamily::PoissonInduced(shape) => {
            if r >= 2.0 * shape.radius() {
                return 0.0;
            }
            let v = spec
                .radial_integral(|k| sphere_mean_cos(d, k * r), &[], 1e-12)
                .expect("covariance quadrature");
            v / (2.0 * PI).powi(d as i32)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_low_dimension_and_zero_shape() {
        assert!(SpectrumModel::gaussian_bump(2, 1.0, 1.0).is_err());
        assert!(ShapeFunction::new(3, 1.0, 0.0).is_err());
        assert!(ShapeFunction::new(3, -1.0, 1.0).is_err());
        assert!(SpectrumModel::gaussian_bump(3, 1.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_covariance_at_origin() {
        let s = SpectrumModel::gaussian_bump(3, 1.0, 1.0).unwrap();
        // (2π)^{-3} ∫ e^{-|ξ|²/2} dξ by radial quadrature
        let oracle = quadrature::integrate(|r| 4.0 * PI * r * r * (-r * r / 2.0).exp(), 0.0, 50.0, 1e-14)
            .unwrap()
            / (2.0 * PI).powi(3);
        assert_relative_eq!(covariance(&s, &[0.0; 3]), oracle, max_relative = 1e-12);
        assert_relative_eq!(oracle, 0.063_493_635_934_240_97, max_relative = 1e-12);
        assert!(covariance(&s, &[60.0, 0.0, 0.0]).abs() < 1e-12);
        assert_relative_eq!(s.total_mass() / (2.0 * PI).powi(3), oracle, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_covariance_matches_fourier_inversion() {
        let s = SpectrumModel::gaussian_bump(4, 1.7, 0.8).unwrap();
        for &r in &[0.3, 1.1, 2.5] {
            let fourier = s.radial_integral(|k| sphere_mean_cos(4, k * r), &[], 1e-12).unwrap()
                / (2.0 * PI).powi(4);
            assert_relative_eq!(covariance_radial(&s, r), fourier, max_relative = 1e-9);
        }
    }

    #[test]
    fn shape_fourier_at_zero_is_integral() {
        let shape = ShapeFunction::new(3, 1.0, 1.0).unwrap();
        assert_relative_eq!(shape.fourier(0.0), shape.integral(), max_relative = 1e-12);
        // direct radial value of c_φ for the unit bump in d = 3
        let direct = quadrature::integrate(|r| 4.0 * PI * r * r * bump_profile(r), 0.0, 1.0, 1e-13).unwrap();
        assert_relative_eq!(shape.integral(), direct, max_relative = 1e-12);
    }

    /// R(r) = ∫ φ(x+y)φ(y) dy in d = 3 by bipolar coordinates:
    /// (2π/r) ∫_0^{r0} s φ(s) ∫_{|r-s|}^{r+s} u φ(u) du ds.
    fn direct_convolution(shape: &ShapeFunction, r: f64) -> f64 {
        let r0 = shape.radius();
        if r == 0.0 {
            return quadrature::integrate(|s| 4.0 * PI * s * s * shape.radial(s).powi(2), 0.0, r0, 1e-13).unwrap();
        }
        let outer = |s: f64| {
            let lo = (r - s).abs();
            let hi = (r + s).min(r0);
            if hi <= lo {
                return 0.0;
            }
            let inner = quadrature::integrate(|u| u * shape.radial(u), lo, hi, 1e-12).unwrap();
            s * shape.radial(s) * inner
        };
        2.0 * PI / r * quadrature::integrate(outer, 0.0, r0, 1e-11).unwrap()
    }

    #[test]
    fn poisson_covariance_matches_direct_convolution() {
        let shape = ShapeFunction::new(3, 1.0, 1.0).unwrap();
        let s = SpectrumModel::poisson_induced(shape.clone()).unwrap();
        for &r in &[0.0, 0.4, 1.0, 1.7] {
            let direct = direct_convolution(&shape, r);
            let peak = direct_convolution(&shape, 0.0);
            assert!(
                (covariance_radial(&s, r) - direct).abs() <= 1e-6 * peak,
                "r={r}: {} vs {direct}",
                covariance_radial(&s, r)
            );
        }
        assert_eq!(covariance_radial(&s, 2.5), 0.0);
        assert_relative_eq!(s.at_origin(), shape.integral().powi(2), max_relative = 1e-14);
    }

    #[test]
    fn radial_table_inverts_to_spectrum_quantiles() {
        let s = SpectrumModel::gaussian_bump(3, 1.0, 1.0).unwrap();
        let t = s.radial_table();
        // chi distribution with 3 dof: median ≈ 1.538172
        assert_relative_eq!(t.invert(0.5), 1.538_172_254_6, max_relative = 1e-4);
    }
}
