//! Small statistics toolkit: normal law, Kolmogorov-Smirnov, moments, fits.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc;

pub fn normal_cdf(x: f64, variance: f64) -> f64 {
    if variance == 0.0 {
        return if x >= 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * erfc(-x / (SQRT_2 * variance.sqrt()))
}

/// Two-sided one-sample KS statistic `sup |F_n − F|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // theta-function form converges fast for small arguments
        let c = -PI * PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|k| (c * ((2 * k - 1) as f64).powi(2)).exp()).sum();
        1.0 - (2.0 * PI).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        2.0 * s
    };
    p.clamp(0.0, 1.0)
}

/// Asymptotic p-value with the finite-sample scaling `(√n + 0.12 + 0.11/√n)·D`.
pub fn ks_pvalue(n: usize, d: f64) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return Moments { mean: f64::NAN, variance: f64::NAN, skewness: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let variance = if xs.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 };
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    Moments { mean, variance, skewness }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Some(LineFit { slope, intercept, r_squared })
}

/// Pearson correlation; `None` when either sample is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 || b.len() != n {
        return None;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n as f64, b.iter().sum::<f64>() / n as f64);
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn kolmogorov_reference_values() {
        // scipy.stats.kstwobign.sf
        assert_relative_eq!(kolmogorov_sf(0.5), 0.963_945_243_664_875_1, max_relative = 1e-9);
        assert_relative_eq!(kolmogorov_sf(1.0), 0.269_999_671_677_354_6, max_relative = 1e-9);
        assert_relative_eq!(kolmogorov_sf(2.0), 0.000_670_925_255_779_695_3, max_relative = 1e-8);
        // continuity across the branch switch
        assert!((kolmogorov_sf(1.18 - 1e-12) - kolmogorov_sf(1.18)).abs() < 1e-10);
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0, 2.0), 0.5);
        assert_relative_eq!(normal_cdf(1.959_963_984_540_054, 1.0), 0.975, max_relative = 1e-10);
        assert_relative_eq!(normal_cdf(2.0, 4.0), 0.841_344_746_068_542_9, max_relative = 1e-10);
    }

    #[test]
    fn ks_statistic_small_example() {
        // uniform cdf on [0,1] with samples 0.1, 0.5, 0.9: D = max(0.1, 1/3-... ) = 0.2333…
        let d = ks_statistic(&[0.9, 0.1, 0.5], |x| x);
        assert_relative_eq!(d, 1.0 / 3.0 - 0.1, max_relative = 1e-12);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert_relative_eq!(f.slope, 2.0, max_relative = 1e-14);
        assert_relative_eq!(f.intercept, -1.0, max_relative = 1e-14);
        assert_eq!(f.r_squared, 1.0);
        assert!(correlation(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }

    proptest! {
        #[test]
        fn ks_and_pvalue_in_unit_interval(xs in prop::collection::vec(-5.0f64..5.0, 1..200)) {
            let d = ks_statistic(&xs, |x| normal_cdf(x, 1.0));
            prop_assert!((0.0..=1.0).contains(&d));
            let p = ks_pvalue(xs.len(), d);
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn fit_invariant_under_reordering(pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 3..20), seed in 0u64..100) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let mut idx: Vec<usize> = (0..pts.len()).collect();
            idx.rotate_left(seed as usize % pts.len());
            idx.reverse();
            let xs2: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
            let ys2: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
            match (linear_fit(&xs, &ys), linear_fit(&xs2, &ys2)) {
                (Some(a), Some(b)) => {
                    prop_assert!((a.slope - b.slope).abs() < 1e-9 * (1.0 + a.slope.abs()));
                    prop_assert!((0.0..=1.0).contains(&a.r_squared));
                }
                (None, None) => {}
                _ => prop_assert!(false),
            }
        }
    }
}
