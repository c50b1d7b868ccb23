//! Regularized correctors `Φ_λ = (λ − ½Δ)^{-1} V` and their spectral moments.

use std::f64::consts::PI;
use std::sync::Arc;

use parking_lot::Mutex;

use crate::error::{ensure_positive, invalid, Error, Result};
use crate::homogenization::green_lambda_radial;
use crate::quadrature::{self, composite_rule, sphere_area};
use crate::random_field::{dot, FieldRealization, GaussianField, ModeScratch, PoissonField, SpectrumModel};

/// λ used in place of the unregularized stationary corrector.
pub const STATIONARY_LAMBDA: f64 = 1e-10;

fn lambda_breaks(spec: &SpectrumModel, lambda: f64) -> Vec<f64> {
    let k = (2.0 * lambda).sqrt();
    let mut b: Vec<f64> = (-6..=6).map(|e| k * 10f64.powi(e)).collect();
    b.retain(|&v| v > 0.0 && v < spec.radial_max());
    b
}

/// `⟨Φ_λ, Φ_λ⟩ = (2π)^{-d} ∫ R̂(ξ)/(λ + ½|ξ|²)² dξ`
pub fn corrector_variance(spec: &SpectrumModel, lambda: f64) -> Result<f64> {
    ensure_positive("lambda", lambda)?;
    let v = spec.radial_integral(|r| (lambda + 0.5 * r * r).powi(-2), &lambda_breaks(spec, lambda), 1e-10)?;
    Ok(v / (2.0 * PI).powi(spec.dim() as i32))
}

/// `σ_λ² = (2π)^{-d} ∫ R̂(ξ)|ξ|²/(λ + ½|ξ|²)² dξ`
pub fn sigma_lambda2(spec: &SpectrumModel, lambda: f64) -> Result<f64> {
    ensure_positive("lambda", lambda)?;
    let v = spec.radial_integral(
        |r| r * r * (lambda + 0.5 * r * r).powi(-2),
        &lambda_breaks(spec, lambda),
        1e-11,
    )?;
    Ok(v / (2.0 * PI).powi(spec.dim() as i32))
}

/// Whether `∫ R̂(ξ)|ξ|^{-4} dξ` is finite, with its value (`+∞` otherwise).
pub fn stationary_corrector_exists(spec: &SpectrumModel) -> (bool, f64) {
    if spec.at_origin() == 0.0 && spec.total_mass() == 0.0 {
        return (true, 0.0);
    }
    if spec.dim() <= 4 {
        return (false, f64::INFINITY);
    }
    match spec.radial_integral(|r| r.powi(-4), &[], 1e-10) {
        Ok(v) if v.is_finite() => (true, v),
        _ => (false, f64::INFINITY),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct D4Row {
    pub lambda: f64,
    pub norm_sq: f64,
    /// `⟨Φ_λ, Φ_λ⟩ / |log λ|`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct D4Asymptotics {
    pub rows: Vec<D4Row>,
    /// `lim ⟨Φ_λ,Φ_λ⟩/|log λ| = 2|S³|(2π)^{-4} R̂(0) = R̂(0)/(4π²)`
    pub limit: f64,
    /// `(ratio − limit)/limit` for the last row.
    pub last_relative_deviation: f64,
}

impl D4Asymptotics {
    /// True when the ratio moves toward the limit at every step.
    pub fn approaches_monotonically(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| (w[1].ratio - self.limit).abs() <= (w[0].ratio - self.limit).abs())
    }
}

pub fn d4_log_asymptotics(spec: &SpectrumModel, lambdas: &[f64]) -> Result<D4Asymptotics> {
    if spec.dim() != 4 {
        return Err(Error::Dimension { dim: spec.dim(), reason: "logarithmic corrector asymptotics are a d = 4 statement".into() });
    }
    if lambdas.is_empty() {
        return Err(invalid("lambdas", "need at least one λ"));
    }
    let rows = lambdas
        .iter()
        .map(|&l| {
            if !(l > 0.0 && l < 1.0) {
                return Err(invalid("lambdas", "each λ must lie in (0, 1)"));
            }
            let n = corrector_variance(spec, l)?;
            Ok(D4Row { lambda: l, norm_sq: n, ratio: n / l.ln().abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    let limit = 2.0 * sphere_area(4) * spec.at_origin() / (2.0 * PI).powi(4);
    let last = rows.last().expect("non-empty").ratio;
    let dev = if limit > 0.0 { (last - limit) / limit } else { 0.0 };
    Ok(D4Asymptotics { rows, limit, last_relative_deviation: dev })
}

/// `Σ_n z^n / ((a)_n n!)`, i.e. `0F1(; a; z)` for `z ≥ 0`, and its derivative in z.
fn hyp0f1(a: f64, z: f64) -> (f64, f64) {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut dsum = 0.0;
    for n in 1..500 {
        let nf = n as f64;
        term *= z / (nf * (a + nf - 1.0));
        sum += term;
        if z > 0.0 {
            dsum += nf * term / z;
        }
        if term < 1e-17 * sum {
            break;
        }
    }
    (sum, dsum)
}

/// Radial profile of `f^λ = φ ⋆ G_λ` with its derivative.
#[derive(Debug, Clone)]
struct ShotKernel {
    dim: usize,
    kappa: f64,
    r0: f64,
    /// ∫ φ(y) M(|y|) dy, the far-field multiple of G_λ
    far_mass: f64,
    h: f64,
    value: Vec<f64>,
    deriv: Vec<f64>,
}

impl ShotKernel {
    fn new(field: &PoissonField, lambda: f64, r_trunc: f64) -> Result<Self> {
        let shape = field.shape();
        let d = shape.dim();
        let r0 = shape.radius();
        let kappa = (2.0 * lambda).sqrt();
        let area = sphere_area(d);
        let m = |s: f64| hyp0f1(d as f64 / 2.0, 0.25 * kappa * kappa * s * s);
        let g = |s: f64| green_lambda_radial(s, lambda, d);
        // G'_d(r) = −2πr G_{d+2}(r)
        let dg = |s: f64| -> Result<f64> { Ok(-2.0 * PI * s * green_lambda_radial(s, lambda, d + 2)?) };

        let far_mass = area * quadrature::integrate(|s| shape.radial(s) * s.powi(d as i32 - 1) * m(s).0, 0.0, r0, 1e-13)?;

        let (tabulated_end, n) = if d == 3 { (r0, 256) } else { (r_trunc, ((r_trunc / r0) * 128.0).ceil() as usize) };
        let h = tabulated_end / n as f64;
        // A(r) = ∫_0^r φ s^{d-1} M(s) ds, B(r) = ∫_r^{r0} φ s^{d-1} G(s) ds on the node grid
        let near_nodes = ((r0 / h).round() as usize).min(n);
        let mut a = vec![0.0; near_nodes + 1];
        let mut b = vec![0.0; near_nodes + 1];
        for i in 0..near_nodes {
            let (lo, hi) = (i as f64 * h, ((i + 1) as f64 * h).min(r0));
            for (s, w) in composite_rule(lo, hi, 1, 12) {
                let base = w * shape.radial(s) * s.powi(d as i32 - 1);
                a[i + 1] += base * m(s).0;
                b[i] += base * g(s)?;
            }
        }
        for i in 1..=near_nodes {
            a[i] += a[i - 1];
        }
        for i in (0..near_nodes).rev() {
            b[i] += b[i + 1];
        }
        let mut value = vec![0.0; n + 1];
        let mut deriv = vec![0.0; n + 1];
        for i in 0..=n {
            let r = i as f64 * h;
            if i <= near_nodes && i > 0 {
                let (mv, mdz) = m(r);
                let dm = mdz * 0.5 * kappa * kappa * r;
                value[i] = area * (g(r)? * a[i] + mv * b[i]);
                deriv[i] = area * (dg(r)? * a[i] + dm * b[i]);
            } else if i == 0 {
                value[0] = area * b[0];
                deriv[0] = 0.0;
            } else {
                value[i] = far_mass * g(r)?;
                deriv[i] = far_mass * dg(r)?;
            }
        }
        Ok(Self { dim: d, kappa, r0, far_mass, h, value, deriv })
    }

    /// `(f(r), f'(r))`; zero beyond the table in d ≠ 3.
    #[inline]
    fn eval(&self, r: f64) -> (f64, f64) {
        if self.dim == 3 && r >= self.r0 {
            let e = self.far_mass * (-self.kappa * r).exp() / (2.0 * PI * r);
            return (e, -e * (self.kappa + 1.0 / r));
        }
        let u = r / self.h;
        let i = u as usize;
        if i + 1 >= self.value.len() {
            return (0.0, 0.0);
        }
        // cubic Hermite on [i, i+1]
        let t = u - i as f64;
        let (y0, y1) = (self.value[i], self.value[i + 1]);
        let (m0, m1) = (self.deriv[i] * self.h, self.deriv[i + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
        let dv = ((6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * m0 + (-6.0 * t2 + 6.0 * t) * y1 + (3.0 * t2 - 2.0 * t) * m1) / self.h;
        (v, dv)
    }
}

#[derive(Debug)]
struct ShotSetup {
    kernel: ShotKernel,
    r_trunc: f64,
    compensation: f64,
    tail_mass: f64,
}

type ShotKey = (usize, u64, u64, u64);

/// Kernels depend only on (shape, λ); ensembles reuse them across realizations.
static SHOT_CACHE: Mutex<Vec<(ShotKey, Arc<ShotSetup>)>> = Mutex::new(Vec::new());

fn shot_setup(p: &PoissonField, lambda: f64) -> Result<Arc<ShotSetup>> {
    let sh = p.shape();
    let key = (sh.dim(), sh.radius().to_bits(), sh.scale().to_bits(), lambda.to_bits());
    if let Some((_, s)) = SHOT_CACHE.lock().iter().find(|(k, _)| *k == key) {
        return Ok(Arc::clone(s));
    }
    let s = Arc::new(build_shot_setup(p, lambda)?);
    let mut cache = SHOT_CACHE.lock();
    if cache.len() >= 16 {
        cache.remove(0);
    }
    cache.push((key, Arc::clone(&s)));
    Ok(s)
}

fn build_shot_setup(p: &PoissonField, lambda: f64) -> Result<ShotSetup> {
    let r0 = p.shape().radius();
    let kappa = (2.0 * lambda).sqrt();
    let budget = 1e-4 * (p.shape().integral() / lambda).abs();
    // start at 10/κ + r₀ and widen until the discarded mean is within budget
    let mut r_trunc = 10.0 / kappa + r0;
    let (kernel, compensation, tail_mass) = loop {
        if r_trunc > 200.0 * p.cell_size().max(1.0) {
            return Err(invalid(
                "lambda",
                format!("shot-noise corrector needs a truncation radius of {r_trunc:.1}; λ is too small"),
            ));
        }
        let kernel = ShotKernel::new(p, lambda, r_trunc)?;
        let d = p.dim();
        let inner = quadrature::integrate_pieces(
            |r| kernel.eval(r).0 * r.powi(d as i32 - 1),
            &[0.0, r0, (r0 + r_trunc) / 2.0, r_trunc],
            1e-10,
            0.0,
        )?;
        let compensation = sphere_area(d) * inner;
        let tail = p.shape().integral() / lambda - compensation;
        if tail.abs() <= budget {
            break (kernel, compensation, tail);
        }
        r_trunc += 1.0 / kappa;
    };
    Ok(ShotSetup { kernel, r_trunc, compensation, tail_mass })
}

#[derive(Debug, Clone)]
enum Kind {
    Gaussian { resolvent: Vec<f64>, scaled: Vec<Vec<f64>> },
    Poisson(Arc<ShotSetup>),
}

/// Evaluates `Φ_λ` and `∇Φ_λ` for one frozen realization.
#[derive(Debug, Clone)]
pub struct CorrectorEvaluator<'a> {
    field: &'a FieldRealization,
    lambda: f64,
    kind: Kind,
}

/// Values of the potential and the corrector at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorSample {
    pub potential: f64,
    pub corrector: f64,
    pub gradient: Vec<f64>,
}

impl<'a> CorrectorEvaluator<'a> {
    pub fn new(field: &'a FieldRealization, lambda: f64) -> Result<Self> {
        ensure_positive("lambda", lambda)?;
        let kind = match field {
            FieldRealization::Gaussian(g) => gaussian_kind(g, lambda),
            FieldRealization::Poisson(p) => Kind::Poisson(shot_setup(p, lambda)?),
        };
        Ok(Self { field, lambda, kind })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn field(&self) -> &FieldRealization {
        self.field
    }

    /// Mean of the shot-noise kernel discarded by truncation (0 for Gaussian fields).
    pub fn tail_mass(&self) -> f64 {
        match &self.kind {
            Kind::Gaussian { .. } => 0.0,
            Kind::Poisson(setup) => setup.tail_mass,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.sample(x).corrector
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.sample(x).gradient
    }

    pub fn sample(&self, x: &[f64]) -> CorrectorSample {
        let mut scratch = ModeScratch::default();
        let mut grad = vec![0.0; self.field.dim()];
        let (v, phi) = self.sample_into(x, &mut scratch, &mut grad);
        CorrectorSample { potential: v, corrector: phi, gradient: grad }
    }

    /// `(V(x), Φ_λ(x))`, writing `∇Φ_λ(x)` into `grad`.
    pub(crate) fn sample_into(&self, x: &[f64], scratch: &mut ModeScratch, grad: &mut [f64]) -> (f64, f64) {
        match (&self.kind, self.field) {
            (Kind::Gaussian { resolvent, scaled }, FieldRealization::Gaussian(g)) => {
                g.load(x, scratch, true);
                let c = g.cos_buf(scratch);
                let s = g.sin_buf(scratch);
                for (k, row) in scaled.iter().enumerate() {
                    grad[k] = -dot(row, s);
                }
                (dot(g.weights(), c), dot(resolvent, c))
            }
            (Kind::Poisson(setup), FieldRealization::Poisson(p)) => {
                let (kernel, r_trunc, compensation) = (&setup.kernel, &setup.r_trunc, setup.compensation);
                let shape = p.shape();
                let r0 = shape.radius();
                let mut v = -shape.integral();
                let mut phi = -compensation;
                grad.iter_mut().for_each(|g| *g = 0.0);
                p.for_each_within(x, *r_trunc, |diff, r2| {
                    let r = r2.sqrt();
                    if r < r0 {
                        v += shape.radial(r);
                    }
                    let (f, df) = kernel.eval(r);
                    phi += f;
                    if r > 0.0 {
                        for (gk, dk) in grad.iter_mut().zip(diff) {
                            *gk += df * dk / r;
                        }
                    }
                });
                (v, phi)
            }
            _ => unreachable!("evaluator kind always matches its field"),
        }
    }
}

fn gaussian_kind(g: &GaussianField, lambda: f64) -> Kind {
    let resolvent: Vec<f64> = g.weights().iter().zip(g.freq_sq()).map(|(w, q)| w / (lambda + 0.5 * q)).collect();
    let scaled = (0..g.dim())
        .map(|k| g.frequency_row(k).iter().zip(&resolvent).map(|(f, b)| f * b).collect())
        .collect();
    Kind::Gaussian { resolvent, scaled }
}

pub fn eval_corrector(ev: &CorrectorEvaluator<'_>, x: &[f64]) -> f64 {
    ev.value(x)
}

pub fn eval_corrector_grad(ev: &CorrectorEvaluator<'_>, x: &[f64]) -> Vec<f64> {
    ev.gradient(x)
}
