//! Stationary mean-zero random potentials.

mod gaussian;
pub mod identities;
mod poisson;
mod spectrum;

pub use gaussian::{make_gaussian_field, make_gaussian_field_with, FrequencySampling, GaussianField, Mode, ModeScratch};
pub use poisson::{make_poisson_field, PoissonField};
pub use spectrum::{covariance, covariance_radial, ShapeFunction, SpectrumFamily, SpectrumModel, MAX_DIM};

pub(crate) use gaussian::dot;

use crate::error::Result;

/// One frozen sample of the potential.
#[derive(Debug, Clone)]
pub enum FieldRealization {
    Gaussian(GaussianField),
    Poisson(PoissonField),
}

impl From<GaussianField> for FieldRealization {
    fn from(f: GaussianField) -> Self {
        FieldRealization::Gaussian(f)
    }
}

impl From<PoissonField> for FieldRealization {
    fn from(f: PoissonField) -> Self {
        FieldRealization::Poisson(f)
    }
}

impl FieldRealization {
    pub fn dim(&self) -> usize {
        match self {
            FieldRealization::Gaussian(f) => f.dim(),
            FieldRealization::Poisson(f) => f.dim(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            FieldRealization::Gaussian(f) => f.value(x),
            FieldRealization::Poisson(f) => f.value(x),
        }
    }

    pub fn value_with(&self, x: &[f64], scratch: &mut ModeScratch) -> f64 {
        match self {
            FieldRealization::Gaussian(f) => f.value_with(x, scratch),
            FieldRealization::Poisson(f) => f.value(x),
        }
    }

    /// Spectrum of the law this realization was drawn from, when known.
    pub fn spectrum(&self) -> Option<Result<SpectrumModel>> {
        match self {
            FieldRealization::Gaussian(f) => f.spectrum().cloned().map(Ok),
            FieldRealization::Poisson(f) => Some(SpectrumModel::poisson_induced(f.shape().clone())),
        }
    }
}

/// `V` at `x`. Alias kept for symmetry with the corrector evaluators.
pub fn eval_field(field: &FieldRealization, x: &[f64]) -> f64 {
    field.value(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn ensemble(n: usize, make: impl Fn(u64) -> FieldRealization, x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
        let mut vx = Vec::with_capacity(n);
        let mut prod = Vec::with_capacity(n);
        for i in 0..n as u64 {
            let f = make(rng::mix(&[77, i]));
            let (a, b) = (f.value(x), f.value(y));
            vx.push(a);
            prod.push(a * b);
        }
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / n as f64;
            let s = (v.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
            (m, s)
        };
        let (m, se) = stats(&vx);
        let (c, cse) = stats(&prod);
        (m, se, c, cse)
    }

    #[test]
    fn gaussian_ensemble_variance_and_mean() {
        let s = SpectrumModel::gaussian_bump(3, 1.0, 1.0).unwrap();
        let pts = [([0.0; 3], [0.0; 3]), ([0.2, 0.0, -0.4], [1.0, 0.5, 0.0])];
        for (x, y) in pts {
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let (m, se, c, cse) = ensemble(
                10_000,
                |sd| make_gaussian_field(&s, 512, sd).unwrap().into(),
                &x,
                &y,
            );
            assert!(m.abs() < 4.0 * se);
            assert!((c - covariance(&s, &diff)).abs() < 4.0 * cse, "{c} vs {}", covariance(&s, &diff));
        }
    }

    #[test]
    fn poisson_ensemble_variance_and_mean() {
        let shape = ShapeFunction::new(3, 1.0, 1.0).unwrap();
        // R(0) = ∫φ² over the support ball
        let r0 = shape.radial_moment(|r| shape.radial(r));
        let spec = SpectrumModel::poisson_induced(shape.clone()).unwrap();
        assert!((covariance(&spec, &[0.0; 3]) - r0).abs() < 1e-8 * r0);
        let pts = [([0.0; 3], [0.0; 3]), ([0.0; 3], [0.6, 0.3, 0.0])];
        for (x, y) in pts {
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let (m, se, c, cse) = ensemble(
                10_000,
                |sd| make_poisson_field(&shape, sd).unwrap().into(),
                &x,
                &y,
            );
            assert!(m.abs() < 4.0 * se, "{m} ± {se}");
            assert!((c - covariance(&spec, &diff)).abs() < 4.0 * cse);
        }
    }
}
