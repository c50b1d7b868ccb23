use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::spectrum::{SpectrumFamily, SpectrumModel};
use crate::error::{invalid, Result};
use crate::fastmath;
use crate::quadrature::sphere_area;
use crate::rng;

/// How mode frequencies are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FrequencySampling {
    /// Frequencies from `R̂/∫R̂`, equal weights.
    #[default]
    Spectral,
    /// Mixture of `R̂/∫R̂` with a log-uniform radial law on `[r_min, r_max]`,
    /// weights rescaled by the likelihood ratio. The covariance is still exact
    /// in expectation; the low-frequency modes that dominate correctors in
    /// d = 4, 5 are sampled far more often.
    LogRadial { r_min: f64, r_max: f64, mix: f64 },
}

impl FrequencySampling {
    fn validate(&self) -> Result<()> {
        if let FrequencySampling::LogRadial { r_min, r_max, mix } = *self {
            if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
                return Err(invalid("field.sampling", "log-radial range needs 0 < r_min < r_max"));
            }
            if !(0.0..1.0).contains(&mix) {
                return Err(invalid("field.sampling", "mixture weight must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub weight: f64,
    pub frequency: Vec<f64>,
    pub phase: f64,
}

/// One realization `V(x) = Σ_j w_j cos(ξ_j·x + θ_j)`.
#[derive(Debug, Clone)]
pub struct GaussianField {
    dim: usize,
    seed: u64,
    spectrum: Option<Arc<SpectrumModel>>,
    // coordinate-major: freq[k * J + j] = ξ_{j,k}
    freq: Vec<f64>,
    phase: Vec<f64>,
    weight: Vec<f64>,
    freq_sq: Vec<f64>,
}

/// Per-thread buffers for mode evaluation.
#[derive(Debug, Default, Clone)]
pub struct ModeScratch {
    arg: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl ModeScratch {
    fn resize(&mut self, n: usize) {
        if self.arg.len() != n {
            self.arg.resize(n, 0.0);
            self.cos.resize(n, 0.0);
            self.sin.resize(n, 0.0);
        }
    }
}

pub fn make_gaussian_field(spec: &SpectrumModel, modes: usize, seed: u64) -> Result<GaussianField> {
    make_gaussian_field_with(spec, modes, seed, FrequencySampling::Spectral)
}

pub fn make_gaussian_field_with(
    spec: &SpectrumModel,
    modes: usize,
    seed: u64,
    sampling: FrequencySampling,
) -> Result<GaussianField> {
    if modes == 0 {
        return Err(invalid("field.modes", "at least one mode is required"));
    }
    sampling.validate()?;
    let d = spec.dim();
    let mass = spec.total_mass();
    if !mass.is_finite() {
        return Err(invalid("potential", "spectrum is not integrable"));
    }
    let mut rng = rng::stream(&[seed, rng::tag::FIELD]);
    let mut freq = vec![0.0; d * modes];
    let mut phase = vec![0.0; modes];
    let mut weight = vec![0.0; modes];
    let norm = (2.0 * PI).powi(d as i32) * modes as f64;
    let equal_weight = (2.0 * mass / norm).sqrt();
    let area = sphere_area(d);
    let mut xi = vec![0.0; d];

    for j in 0..modes {
        let from_log = match sampling {
            FrequencySampling::LogRadial { mix, .. } => rng.gen::<f64>() < mix,
            FrequencySampling::Spectral => false,
        };
        match sampling {
            FrequencySampling::LogRadial { r_min, r_max, .. } if from_log => {
                let r = r_min * ((r_max / r_min).ln() * rng.gen::<f64>()).exp();
                random_direction(&mut rng, &mut xi);
                xi.iter_mut().for_each(|v| *v *= r);
            }
            _ => draw_spectral(spec, &mut rng, &mut xi),
        }
        let w = match sampling {
            FrequencySampling::Spectral => equal_weight,
            FrequencySampling::LogRadial { r_min, r_max, mix } => {
                if mass == 0.0 {
                    0.0
                } else {
                    let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dens = spec.density(r);
                    let log_part = if r >= r_min && r <= r_max {
                        1.0 / (area * r.powi(d as i32) * (r_max / r_min).ln())
                    } else {
                        0.0
                    };
                    let p = (1.0 - mix) * dens / mass + mix * log_part;
                    if p > 0.0 {
                        (2.0 * dens / (norm * p)).sqrt()
                    } else {
                        0.0
                    }
                }
            }
        };
        for k in 0..d {
            freq[k * modes + j] = xi[k];
        }
        phase[j] = 2.0 * PI * rng.gen::<f64>();
        weight[j] = w;
    }
    Ok(GaussianField::assemble(d, seed, Some(Arc::new(spec.clone())), freq, phase, weight))
}

fn random_direction<R: Rng>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut n2 = 0.0;
        for v in out.iter_mut() {
            *v = StandardNormal.sample(rng);
            n2 += *v * *v;
        }
        if n2 > 1e-300 {
            let n = n2.sqrt();
            out.iter_mut().for_each(|v| *v /= n);
            return;
        }
    }
}

fn draw_spectral<R: Rng>(spec: &SpectrumModel, rng: &mut R, out: &mut [f64]) {
    match spec.family() {
        SpectrumFamily::GaussianBump { width, .. } => {
            for v in out.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v = width * z;
            }
        }
        SpectrumFamily::PoissonInduced(_) => {
            let r = spec.radial_table().invert(rng.gen::<f64>());
            random_direction(rng, out);
            out.iter_mut().for_each(|v| *v *= r);
        }
    }
}

impl GaussianField {
    fn assemble(
        dim: usize,
        seed: u64,
        spectrum: Option<Arc<SpectrumModel>>,
        freq: Vec<f64>,
        phase: Vec<f64>,
        weight: Vec<f64>,
    ) -> Self {
        let n = phase.len();
        let freq_sq = (0..n)
            .map(|j| (0..dim).map(|k| freq[k * n + j].powi(2)).sum())
            .collect();
        Self { dim, seed, spectrum, freq, phase, weight, freq_sq }
    }

    /// Field with explicitly given modes (no spectrum attached).
    pub fn from_modes(dim: usize, modes: &[Mode]) -> Result<Self> {
        if modes.is_empty() {
            return Err(invalid("field.modes", "at least one mode is required"));
        }
        let n = modes.len();
        let mut freq = vec![0.0; dim * n];
        for (j, m) in modes.iter().enumerate() {
            if m.frequency.len() != dim {
                return Err(invalid("field.modes", "frequency length differs from dimension"));
            }
            for k in 0..dim {
                freq[k * n + j] = m.frequency[k];
            }
        }
        let phase = modes.iter().map(|m| m.phase).collect();
        let weight = modes.iter().map(|m| m.weight).collect();
        Ok(Self::assemble(dim, 0, None, freq, phase, weight))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    pub fn spectrum(&self) -> Option<&SpectrumModel> {
        self.spectrum.as_deref()
    }

    pub fn modes(&self) -> Vec<Mode> {
        let n = self.len();
        (0..n)
            .map(|j| Mode {
                weight: self.weight[j],
                frequency: (0..self.dim).map(|k| self.freq[k * n + j]).collect(),
                phase: self.phase[j],
            })
            .collect()
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub(crate) fn freq_sq(&self) -> &[f64] {
        &self.freq_sq
    }

    pub(crate) fn frequency_row(&self, k: usize) -> &[f64] {
        let n = self.len();
        &self.freq[k * n..(k + 1) * n]
    }

    fn arguments(&self, x: &[f64], scratch: &mut ModeScratch) {
        let n = self.len();
        scratch.resize(n);
        scratch.arg.copy_from_slice(&self.phase);
        for (k, &xk) in x.iter().enumerate().take(self.dim) {
            let row = &self.freq[k * n..(k + 1) * n];
            for (a, &f) in scratch.arg.iter_mut().zip(row) {
                *a += f * xk;
            }
        }
    }

    /// Fill `scratch` with `cos` (and optionally `sin`) of all mode arguments.
    pub(crate) fn load(&self, x: &[f64], scratch: &mut ModeScratch, with_sin: bool) {
        self.arguments(x, scratch);
        if with_sin {
            fastmath::cos_sin_slice(&scratch.arg, &mut scratch.cos, &mut scratch.sin);
        } else {
            fastmath::cos_slice(&scratch.arg, &mut scratch.cos);
        }
    }

    pub(crate) fn cos_buf<'a>(&self, scratch: &'a ModeScratch) -> &'a [f64] {
        &scratch.cos
    }

    pub(crate) fn sin_buf<'a>(&self, scratch: &'a ModeScratch) -> &'a [f64] {
        &scratch.sin
    }

    pub fn value_with(&self, x: &[f64], scratch: &mut ModeScratch) -> f64 {
        self.load(x, scratch, false);
        dot(&self.weight, &scratch.cos)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.value_with(x, &mut ModeScratch::default())
    }

    /// `E[h Σ' V(y₀ + B_{nh}/ε)]`, the trapezoid sum over `steps` steps of
    /// size `h = t/steps`, averaged over Brownian paths. Exact for the
    /// discrete path since each `B_{nh}` is Gaussian.
    pub fn trapezoid_path_mean(&self, y0: &[f64], t: f64, steps: usize, eps: f64) -> f64 {
        let mut scratch = ModeScratch::default();
        self.load(y0, &mut scratch, false);
        let n = self.len();
        let h = t / steps as f64;
        let mut total = 0.0;
        for j in 0..n {
            let q2: f64 = (0..self.dim).map(|k| self.freq[k * n + j].powi(2)).sum();
            let ah = 0.5 * q2 / (eps * eps) * h;
            // Σ_{m=0}^{N} r^m − ½ − ½r^N with r = e^{-ah}
            let sum = if ah < 1e-12 {
                steps as f64
            } else {
                let geo = (-(ah * (steps + 1) as f64)).exp_m1() / (-ah).exp_m1();
                geo - 0.5 - 0.5 * (-(ah * steps as f64)).exp()
            };
            total += self.weight[j] * scratch.cos[j] * sum;
        }
        h * total
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize without reassociation
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}
