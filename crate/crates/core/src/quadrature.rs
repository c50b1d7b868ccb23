//! One-dimensional quadrature and radial helpers.
//!
//! Every isotropic integral in the crate is reduced to a radial integral
//! `|S^{d-1}| ∫ g(r) r^{d-1} dr`, and oscillatory radial kernels go through
//! [`sphere_mean_cos`], the average of `cos(ξ·x)` over the sphere `|ξ| = r`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and the embedded 7-point Gauss error bound.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over the pieces
/// `[breaks[i], breaks[i+1]]`, bisecting the worst segment until the summed
/// error estimate is below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    const MAX_SEGMENTS: usize = 20_000;
    let mut heap = BinaryHeap::new();
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (value, err) = gk15(&f, w[0], w[1]);
        total += value;
        total_err += err;
        heap.push(Segment { a: w[0], b: w[1], value, err });
    }
    let mut n = heap.len();
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if n >= MAX_SEGMENTS || mid <= worst.a || mid >= worst.b {
            if !total.is_finite() || total_err > 1e3 * abs_tol.max(rel_tol * total.abs()) {
                return Err(Error::Quadrature(format!(
                    "no convergence after {n} segments (estimate {total:e}, error {total_err:e})"
                )));
            }
            break;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Segment { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, err: e2 });
        n += 1;
    }
    if !total.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integral {total}")));
    }
    Ok(total)
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    integrate_pieces(f, &[a, b], rel_tol, 0.0)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed composite Gauss-Legendre rule on `[a, b]`: `panels` equal panels of
/// `order` points each.
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((c + 0.5 * h * xi, 0.5 * h * wi));
        }
    }
    out
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    2.0 * PI.powf(half) / statrs::function::gamma::gamma(half)
}

/// Average of `cos(ξ·x)` over `|ξ| = 1` at `|x| = z` in `R^d`, i.e.
/// `Γ(d/2) (2/z)^{d/2-1} J_{d/2-1}(z)`.
pub fn sphere_mean_cos(d: usize, z: f64) -> f64 {
    let z = z.abs();
    let half = d as f64 / 2.0;
    if z < (2.0 * half + 2.0).max(4.0) {
        // 0F1(; d/2; -z²/4)
        let q = -0.25 * z * z;
        let mut term = 1.0;
        let mut sum = 1.0;
        for m in 1..200 {
            let mf = m as f64;
            term *= q / (mf * (half + mf - 1.0));
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        return sum;
    }
    if d % 2 == 1 {
        let l = (d - 3) / 2;
        let (s, c) = z.sin_cos();
        let mut j0 = s / z;
        if l == 0 {
            return j0;
        }
        let mut j1 = s / (z * z) - c / z;
        for n in 1..l {
            let j2 = (2 * n + 1) as f64 / z * j1 - j0;
            j0 = j1;
            j1 = j2;
        }
        let dfact: f64 = (1..=l).map(|k| (2 * k + 1) as f64).product();
        dfact * j1 / z.powi(l as i32)
    } else {
        let n = d / 2 - 1;
        let nfact: f64 = (1..=n).map(|k| k as f64).product();
        2f64.powi(n as i32) * nfact * bessel_j_int(n, z) / z.powi(n as i32)
    }
}

/// Integer-order Bessel function of the first kind for `z >= 0`.
pub fn bessel_j_int(n: usize, z: f64) -> f64 {
    let nf = n as f64;
    if z > 30.0 + nf * nf {
        // Hankel asymptotic expansion.
        let mu = 4.0 * nf * nf;
        let chi = z - (0.5 * nf + 0.25) * PI;
        let (mut p, mut q) = (1.0, 0.0);
        let mut a = 1.0;
        for k in 1..30 {
            let kf = k as f64;
            let odd = 2.0 * kf - 1.0;
            a *= (mu - odd * odd) / (kf * 8.0 * z);
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 1 {
                q += sign * a;
            } else {
                p += sign * a;
            }
            if a.abs() < 1e-17 {
                break;
            }
        }
        return (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin());
    }
    // Trapezoid rule on the periodic Bessel integral is spectrally accurate.
    let m = z as usize + n + 40;
    let h = 2.0 * PI / m as f64;
    let sum: f64 = (0..m)
        .map(|i| {
            let tau = i as f64 * h;
            (nf * tau - z * tau.sin()).cos()
        })
        .sum();
    sum / m as f64
}
