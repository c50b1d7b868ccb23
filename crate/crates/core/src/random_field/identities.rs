//! Exact moment identities used to validate the Monte Carlo machinery.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{invalid, Result};
use crate::feynman_kac::MCEstimate;
use crate::parallel::mc_blocks;
use crate::quadrature::gauss_legendre;
use crate::rng;

/// Test function on a box.
#[derive(Debug, Clone, PartialEq)]
pub enum BoxFunction {
    Zero,
    /// `value` on `[lo, hi]`, zero outside.
    Indicator { lo: Vec<f64>, hi: Vec<f64>, value: f64 },
    /// `amplitude·exp(-1/(1-|y-c|²/r²))` inside the ball.
    Bump { center: Vec<f64>, radius: f64, amplitude: f64 },
}

impl BoxFunction {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            BoxFunction::Zero => 0.0,
            BoxFunction::Indicator { lo, hi, value } => {
                if y.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v >= a && v <= b) {
                    *value
                } else {
                    0.0
                }
            }
            BoxFunction::Bump { center, radius, amplitude } => {
                let u2 = y.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (radius * radius);
                if u2 < 1.0 {
                    amplitude * (-1.0 / (1.0 - u2)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            BoxFunction::Zero => None,
            BoxFunction::Indicator { lo, hi, .. } => Some((lo.clone(), hi.clone())),
            BoxFunction::Bump { center, radius, .. } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
        }
    }

    /// Coordinates along `axis` where the function is not smooth.
    fn kinks(&self, axis: usize) -> Vec<f64> {
        match self {
            BoxFunction::Zero => vec![],
            BoxFunction::Indicator { lo, hi, .. } => vec![lo[axis], hi[axis]],
            BoxFunction::Bump { center, radius, .. } => {
                vec![center[axis] - radius, center[axis], center[axis] + radius]
            }
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            BoxFunction::Zero => None,
            BoxFunction::Indicator { lo, hi, .. } => (lo.len() == hi.len()).then_some(lo.len()),
            BoxFunction::Bump { center, .. } => Some(center.len()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityCheck {
    pub closed_form: Complex64,
    pub mc: MCEstimate,
}

impl IdentityCheck {
    /// `|closed_form − mc.mean| ≤ k·ci`
    pub fn agrees(&self, k: f64) -> bool {
        let gap = (self.closed_form - self.mc.mean()).norm();
        gap <= k * self.mc.ci() || gap == 0.0
    }
}

fn tensor_rule(lo: &[f64], hi: &[f64], hs: &[&BoxFunction]) -> Vec<Vec<(f64, f64)>> {
    let (gx, gw) = gauss_legendre(12);
    (0..lo.len())
        .map(|k| {
            let mut br: Vec<f64> = vec![lo[k], hi[k]];
            for h in hs {
                br.extend(h.kinks(k).into_iter().filter(|&v| v > lo[k] && v < hi[k]));
            }
            br.sort_by(f64::total_cmp);
            br.dedup();
            let mut rule = Vec::new();
            for seg in br.windows(2) {
                let panels = 6;
                let w = (seg[1] - seg[0]) / panels as f64;
                for p in 0..panels {
                    let a = seg[0] + p as f64 * w;
                    for (x, wt) in gx.iter().zip(&gw) {
                        rule.push((a + 0.5 * w * (x + 1.0), 0.5 * w * wt));
                    }
                }
            }
            rule
        })
        .collect()
}

/// Checks `E{e^{i∫h₁dω}∫h₂dω∫h₃dω} = exp(∫(e^{ih₁}−1))·(∫e^{ih₁}h₂h₃ + ∫e^{ih₁}h₂·∫e^{ih₁}h₃)`
/// for a unit-intensity Poisson process restricted to the box `[lo, hi]`.
pub fn poisson_moment_identity(
    h: [&BoxFunction; 3],
    lo: &[f64],
    hi: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<IdentityCheck> {
    let d = lo.len();
    if d == 0 || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
        return Err(invalid("box", "need lo < hi componentwise"));
    }
    if n_mc == 0 {
        return Err(invalid("n_mc", "at least one sample is required"));
    }
    for f in h {
        if let Some(fd) = f.dim() {
            if fd != d {
                return Err(invalid("box", "test function dimension differs from box"));
            }
        }
        if let Some((a, b)) = f.bounds() {
            let inside = (0..d).all(|k| a[k] >= lo[k] - 1e-12 && b[k] <= hi[k] + 1e-12);
            if !inside {
                return Err(invalid("box", "box does not contain the support of every test function"));
            }
        }
    }

    let rules = tensor_rule(lo, hi, &h);
    let mut i0 = Complex64::new(0.0, 0.0);
    let mut i1 = i0;
    let mut i2 = i0;
    let mut i3 = i0;
    let mut idx = vec![0usize; d];
    let mut y = vec![0.0; d];
    'outer: loop {
        let mut w = 1.0;
        for k in 0..d {
            let (x, wk) = rules[k][idx[k]];
            y[k] = x;
            w *= wk;
        }
        let (a, b, c) = (h[0].eval(&y), h[1].eval(&y), h[2].eval(&y));
        let e = Complex64::from_polar(1.0, a);
        i0 += w * (e - 1.0);
        i1 += w * e * b * c;
        i2 += w * e * b;
        i3 += w * e * c;
        for k in 0..d {
            idx[k] += 1;
            if idx[k] < rules[k].len() {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    let closed_form = i0.exp() * (i1 + i2 * i3);

    let volume: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
    let counts = Poisson::new(volume).map_err(|e| invalid("box", e.to_string()))?;
    let mc = mc_blocks(n_mc, &[seed, rng::tag::SAMPLE], |g| {
        let n = counts.sample(g) as usize;
        let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
        let mut p = vec![0.0; d];
        for _ in 0..n {
            for k in 0..d {
                p[k] = lo[k] + (hi[k] - lo[k]) * g.gen::<f64>();
            }
            s1 += h[0].eval(&p);
            s2 += h[1].eval(&p);
            s3 += h[2].eval(&p);
        }
        Complex64::from_polar(1.0, s1) * s2 * s3
    });
    Ok(IdentityCheck { closed_form, mc })
}

/// Lower-triangular `L` with `L Lᵀ = Σ`, accepting semidefinite input.
fn psd_factor(sigma: &[[f64; 4]; 4]) -> Result<[[f64; 4]; 4]> {
    let scale = (0..4).map(|i| sigma[i][i].abs()).fold(0.0, f64::max).max(1e-300);
    for i in 0..4 {
        for j in 0..4 {
            if !sigma[i][j].is_finite() || (sigma[i][j] - sigma[j][i]).abs() > 1e-12 * scale {
                return Err(invalid("sigma", "covariance must be finite and symmetric"));
            }
        }
    }
    let tol = 1e-12 * scale;
    let mut l = [[0.0; 4]; 4];
    for j in 0..4 {
        let mut dj = sigma[j][j];
        for k in 0..j {
            dj -= l[j][k] * l[j][k];
        }
        if dj < -tol {
            return Err(invalid("sigma", "covariance is not positive semidefinite"));
        }
        if dj <= tol {
            // degenerate direction: the remaining column must vanish too
            for i in j + 1..4 {
                let mut v = sigma[i][j];
                for k in 0..j {
                    v -= l[i][k] * l[j][k];
                }
                if v.abs() > 1e-8 * scale.sqrt() * scale.sqrt() {
                    return Err(invalid("sigma", "covariance is not positive semidefinite"));
                }
            }
            continue;
        }
        let djs = dj.sqrt();
        l[j][j] = djs;
        for i in j + 1..4 {
            let mut v = sigma[i][j];
            for k in 0..j {
                v -= l[i][k] * l[j][k];
            }
            l[i][j] = v / djs;
        }
    }
    Ok(l)
}

/// `E{(e^{iN₁}−e^{−s/2})(e^{iN₂}−e^{−s/2})N₃N₄}` for centred jointly Gaussian
/// `N` with covariance `Σ`, where `s = sigma2t`.
pub fn gaussian_fourth_moment(sigma: &[[f64; 4]; 4], sigma2t: f64) -> Result<f64> {
    psd_factor(sigma)?;
    if !sigma2t.is_finite() {
        return Err(invalid("sigma2t", "must be finite"));
    }
    let s = |i: usize, j: usize| sigma[i - 1][j - 1];
    let h = (-0.5 * sigma2t).exp();
    let e1 = (-0.5 * s(1, 1)).exp();
    let e2 = (-0.5 * s(2, 2)).exp();
    let e12 = (-0.5 * s(1, 1) - 0.5 * s(2, 2) - s(1, 2)).exp();
    Ok(s(3, 1) * s(4, 1) * (h * e1 - e12) + s(3, 2) * s(4, 2) * (h * e2 - e12)
        - s(3, 2) * s(4, 1) * e12
        - s(3, 1) * s(4, 2) * e12
        + s(3, 4) * ((-sigma2t).exp() + e12 - h * e1 - h * e2))
}

/// Monte Carlo estimate of the same expectation.
pub fn gaussian_fourth_moment_mc(sigma: &[[f64; 4]; 4], sigma2t: f64, n: usize, seed: u64) -> Result<MCEstimate> {
    let l = psd_factor(sigma)?;
    let h = (-0.5 * sigma2t).exp();
    Ok(mc_blocks(n, &[seed, rng::tag::SAMPLE], |g| {
        let z: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(g));
        let nv: [f64; 4] = std::array::from_fn(|i| (0..=i).map(|k| l[i][k] * z[k]).sum());
        (Complex64::from_polar(1.0, nv[0]) - h) * (Complex64::from_polar(1.0, nv[1]) - h) * nv[2] * nv[3]
    }))
}

pub fn gaussian_fourth_moment_check(sigma: &[[f64; 4]; 4], sigma2t: f64, n: usize, seed: u64) -> Result<IdentityCheck> {
    Ok(IdentityCheck {
        closed_form: Complex64::new(gaussian_fourth_moment(sigma, sigma2t)?, 0.0),
        mc: gaussian_fourth_moment_mc(sigma, sigma2t, n, seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_indicator() -> BoxFunction {
        BoxFunction::Indicator { lo: vec![0.0; 3], hi: vec![1.0; 3], value: 1.0 }
    }

    #[test]
    fn all_zero_functions() {
        let z = BoxFunction::Zero;
        let r = poisson_moment_identity([&z, &z, &z], &[0.0; 3], &[1.0; 3], 1000, 1).unwrap();
        assert_eq!(r.closed_form, Complex64::new(0.0, 0.0));
        assert_eq!(r.mc.mean(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn poisson_count_second_moment() {
        let ind = unit_indicator();
        let r = poisson_moment_identity([&BoxFunction::Zero, &ind, &ind], &[0.0; 3], &[1.0; 3], 100_000, 7).unwrap();
        assert!((r.closed_form - Complex64::new(2.0, 0.0)).norm() < 1e-10, "{:?}", r.closed_form);
        assert!(r.agrees(4.0), "{:?}", r);
    }

    #[test]
    fn smooth_bump_identity() {
        let b = BoxFunction::Bump { center: vec![0.5; 3], radius: 0.5, amplitude: 0.5 };
        let r = poisson_moment_identity([&b, &b, &b], &[0.0; 3], &[1.0; 3], 100_000, 3).unwrap();
        assert!(r.agrees(4.0), "{:?}", r);
    }

    #[test]
    fn support_outside_box_is_rejected() {
        let b = BoxFunction::Bump { center: vec![0.9; 3], radius: 0.5, amplitude: 0.5 };
        assert!(poisson_moment_identity([&b, &b, &b], &[0.0; 3], &[1.0; 3], 10, 3).is_err());
    }

    #[test]
    fn fourth_moment_trivial_cases() {
        let zero = [[0.0; 4]; 4];
        assert_eq!(gaussian_fourth_moment(&zero, 0.0).unwrap(), 0.0);
        let mut d = [[0.0; 4]; 4];
        d[2][2] = 1.0;
        d[3][3] = 1.0;
        assert_eq!(gaussian_fourth_moment(&d, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn non_psd_rejected() {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            m[i][i] = 1.0;
        }
        m[0][1] = 2.0;
        m[1][0] = 2.0;
        assert!(gaussian_fourth_moment(&m, 0.0).is_err());
        m[1][0] = 0.0;
        assert!(gaussian_fourth_moment(&m, 0.0).is_err());
    }

    fn psd_from(a: &[f64]) -> [[f64; 4]; 4] {
        // Σ = A Aᵀ scaled into [-0.3, 0.3]
        let mut s = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                s[i][j] = (0..4).map(|k| a[4 * i + k] * a[4 * j + k]).sum::<f64>();
            }
        }
        let m = s.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        s.iter_mut().flatten().for_each(|v| *v *= 0.3 / m.max(1e-12));
        s
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn fourth_moment_matches_mc(a in prop::collection::vec(-1.0f64..1.0, 16), seed in 0u64..1000) {
            let s = psd_from(&a);
            let r = gaussian_fourth_moment_check(&s, s[0][0], 200_000, seed).unwrap();
            prop_assert!(r.agrees(4.0), "{:?}", r);
        }
    }
}
