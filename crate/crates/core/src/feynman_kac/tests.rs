use super::*;
use crate::corrector::CorrectorEvaluator;
use crate::homogenization::{HomogenizedModel, InitialCondition};
use crate::random_field::{make_gaussian_field, FieldRealization, SpectrumModel};
use crate::rng;

fn zero_field() -> FieldRealization {
    make_gaussian_field(&SpectrumModel::gaussian_bump(3, 0.0, 1.0).unwrap(), 8, 1).unwrap().into()
}

fn default_field(modes: usize, seed: u64) -> FieldRealization {
    make_gaussian_field(&SpectrumModel::gaussian_bump(3, 1.0, 1.0).unwrap(), modes, seed).unwrap().into()
}

fn bump() -> InitialCondition {
    InitialCondition::GaussianBump { center: vec![0.0; 3], width: 1.0, height: 1.0 }
}

const ONE: InitialCondition = InitialCondition::Constant { value: 1.0 };

#[test]
fn zero_potential_constant_data_is_exactly_one() {
    let e = u_eps_estimate(&zero_field(), &ONE, 1.0, &[0.0; 3], 0.3, 64, 0.05, 1).unwrap();
    assert_eq!(e.mean(), crate::Complex64::new(1.0, 0.0));
    assert_eq!(e.variance(), 0.0);
}

#[test]
fn zero_potential_matches_heat_flow() {
    let model = HomogenizedModel::with_sigma2(3, 0.0, bump()).unwrap();
    let x = [0.3, 0.0, -0.2];
    let e = u_eps_estimate(&zero_field(), &bump(), 1.0, &x, 0.5, 20_000, 0.25, 2).unwrap();
    assert!((e.mean().re - model.value(1.0, &x)).abs() <= 4.0 * e.ci(), "{:?}", e);
    assert_eq!(e.mean().im, 0.0);
}

#[test]
fn unit_modulus_phase_bounds_estimate() {
    let f = default_field(64, 3);
    let e = u_eps_estimate(&f, &bump(), 1.0, &[0.0; 3], 0.4, 32, 0.05, 3).unwrap();
    assert!(e.mean().norm() <= 1.0 + 1e-15);
}

#[test]
fn mean_error_small_at_moderate_eps() {
    let spec = SpectrumModel::gaussian_bump(3, 1.0, 1.0).unwrap();
    let model = HomogenizedModel::new(&spec, ONE).unwrap();
    let eps = 0.2;
    let n_omega = 256;
    let mut acc = crate::MCEstimate::new();
    for w in 0..n_omega {
        let f = default_field(64, rng::mix(&[5, w]));
        let e = u_eps_estimate(&f, &ONE, 1.0, &[0.0; 3], eps, 8, 0.05, rng::mix(&[6, w])).unwrap();
        acc.push(e.mean());
    }
    let err = (acc.mean() - model.value(1.0, &[0.0; 3])).norm();
    assert!(err <= 0.5 * eps.sqrt(), "{err}");
}

#[test]
fn worker_count_does_not_change_results() {
    let f = default_field(64, 9);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            u_eps_estimate(&f, &bump(), 1.0, &[0.1; 3], 0.4, 37, 0.05, 11).unwrap()
        })
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.mean().re.to_bits(), b.mean().re.to_bits());
    assert_eq!(a.mean().im.to_bits(), b.mean().im.to_bits());
    assert_eq!(a.variance().to_bits(), b.variance().to_bits());
}

#[test]
fn decomposition_of_zero_potential() {
    let f = zero_field();
    let eps = 0.3;
    let ev = CorrectorEvaluator::new(&f, eps * eps).unwrap();
    let p = simulate_path(1.0, eps, 0.05, 3, 4).unwrap();
    let r = martingale_decomposition(&ev, &p, &[0.0; 3], eps, &[0.0; 3]).unwrap();
    assert_eq!((r.x, r.r, r.m, r.residual), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(r.qv_gap_gradient + r.qv_gap_cross, 0.0);
    assert!(CorrectorEvaluator::new(&f, 0.5)
        .and_then(|ev| martingale_decomposition(&ev, &p, &[0.0; 3], eps, &[0.0; 3]))
        .is_err());
}

#[test]
fn qv_gap_identity_is_exact() {
    let f = default_field(64, 12);
    let eps = 0.4;
    let ev = CorrectorEvaluator::new(&f, eps * eps).unwrap();
    let p = simulate_path(1.0, eps, 0.05, 3, 5).unwrap();
    let xi = [0.3, -0.2, 0.5];
    let r = martingale_decomposition(&ev, &p, &[0.0; 3], eps, &xi).unwrap();
    assert!((r.qv - r.qv_target - r.qv_gap_gradient - r.qv_gap_cross).abs() < 1e-12);
}

#[test]
fn ito_residual_shrinks_with_step() {
    let eps = 0.4;
    let fine_dt = 0.003125;
    let mut rms = [0.0f64; 3];
    let n = 24;
    for w in 0..n {
        let f = default_field(64, rng::mix(&[13, w]));
        let ev = CorrectorEvaluator::new(&f, eps * eps).unwrap();
        let fine = simulate_path(1.0, eps, fine_dt, 3, rng::mix(&[14, w])).unwrap();
        for (i, factor) in [4usize, 2, 1].iter().enumerate() {
            let p = fine.coarsen(*factor).unwrap();
            let r = martingale_decomposition(&ev, &p, &[0.0; 3], eps, &[0.0; 3]).unwrap();
            rms[i] += r.residual * r.residual / n as f64;
        }
    }
    let order = (rms[0].sqrt() / rms[2].sqrt()).log2() / 2.0;
    assert!(order >= 0.5, "{rms:?} order {order}");
}

#[test]
fn qv_mean_matches_target() {
    let eps = 0.4;
    let xi = [0.5, 0.0, 0.0];
    let n = 400;
    let mut diffs = Vec::with_capacity(n);
    for w in 0..n as u64 {
        let f = default_field(128, rng::mix(&[15, w]));
        let ev = CorrectorEvaluator::new(&f, eps * eps).unwrap();
        let p = simulate_path(1.0, eps, 0.05, 3, rng::mix(&[16, w])).unwrap();
        let r = martingale_decomposition(&ev, &p, &[0.0; 3], eps, &xi).unwrap();
        diffs.push(r.qv - r.qv_target);
    }
    let e = crate::MCEstimate::from_real(diffs);
    assert!(e.mean().re.abs() <= 4.0 * e.std_err(), "{:?}", e);
}

#[test]
fn v_eps_structure() {
    let e = v_eps_estimate(&zero_field(), &ONE, 1.0, &[0.0; 3], 0.1, 0.25, 16, 0.001, 1).unwrap();
    assert_eq!(e.mean().norm(), 0.0);
    let f = default_field(64, 2);
    let e = v_eps_estimate(&f, &ONE, 1.0, &[0.0; 3], 0.2, 0.25, 16, 0.004, 1).unwrap();
    assert_eq!(e.mean().re, 0.0);
    let f4: FieldRealization = make_gaussian_field(&SpectrumModel::gaussian_bump(4, 1.0, 1.0).unwrap(), 8, 1).unwrap().into();
    assert!(v_eps_estimate(&f4, &ONE, 1.0, &[0.0; 4], 0.2, 0.25, 16, 0.004, 1).is_err());
}

#[test]
fn duality_examples() {
    let z = malliavin_duality_check(&DualityTerminal::Coordinate { axis: 0 }, &DualityIntegrand::Zero, 3, 1.0, 10, 1000, 1).unwrap();
    assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
    let c = malliavin_duality_check(&DualityTerminal::Coordinate { axis: 0 }, &DualityIntegrand::Unit { axis: 0 }, 3, 2.0, 20, 100_000, 2).unwrap();
    assert!((c.rhs - 2.0).abs() < 1e-12);
    assert!(c.agrees(4.0), "{c:?}");
    let b = malliavin_duality_check(&DualityTerminal::Smooth(bump()), &DualityIntegrand::Sine, 3, 1.0, 50, 100_000, 3).unwrap();
    assert!(b.agrees(4.0), "{b:?}");
}

#[test]
fn mclt_examples() {
    let rows = mclt_bound_check(&[QvProfile::Deterministic { total: 1.0 }], 64, 10_000, 1).unwrap();
    assert_eq!(rows[0].lhs, 0.0);
    assert!(rows[0].ratio.is_none());
    let profs: Vec<QvProfile> = [0.05, 0.1, 0.2].iter().map(|d| QvProfile::Deterministic { total: 1.0 + d }).collect();
    for r in mclt_bound_check(&profs, 64, 20_000, 2).unwrap() {
        assert!(r.ratio.unwrap() <= 2.0, "{r:?}");
    }
    let bad = QvProfile::Tabulated { times: vec![0.0, 0.5, 1.0], values: vec![0.0, 0.8, 0.6] };
    assert!(mclt_bound_check(&[bad], 16, 10, 1).is_err());
    assert!(mclt_bound_check(&[QvProfile::Adaptive { amplitude: 1.5 }], 16, 10, 1).is_err());
}

#[test]
fn trapezoid_path_mean_matches_path_average() {
    let FieldRealization::Gaussian(g) = default_field(32, 21) else { unreachable!() };
    let (t, eps, steps) = (1.0, 0.5, 40);
    let y0 = [0.3 / eps, -0.2 / eps, 0.0];
    let h = t / steps as f64;
    let sums: Vec<f64> = (0..20_000u64)
        .map(|i| {
            let p = BrownianPath::generate(steps, h, 3, rng::mix(&[22, i])).unwrap();
            let pos = p.positions();
            let vals: Vec<f64> = (0..=steps)
                .map(|n| {
                    let y: Vec<f64> = (0..3).map(|k| y0[k] + pos[n * 3 + k] / eps).collect();
                    g.value(&y)
                })
                .collect();
            h * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[steps]))
        })
        .collect();
    let e = MCEstimate::from_real(sums);
    let exact = g.trapezoid_path_mean(&y0, t, steps, eps);
    assert!((e.mean().re - exact).abs() < 4.0 * e.std_err(), "{} vs {exact} ± {}", e.mean().re, e.std_err());
}

#[test]
fn control_variate_removes_path_noise_for_constant_data() {
    let f = default_field(64, 23);
    let (est, noise) = v_eps_inner_controlled(&f, &ONE, 1.0, &[0.0; 3], 0.3, 0.25, 8, 0.01, 24, &mut Default::default()).unwrap();
    assert!(noise < 1e-20, "{noise}");
    let plain = v_eps_estimate(&f, &ONE, 1.0, &[0.0; 3], 0.3, 0.25, 4000, 0.01, 25).unwrap();
    assert!((plain.mean().im - est).abs() < 4.0 * plain.std_err(), "{} vs {est}", plain.mean().im);
}

#[test]
fn control_variate_is_consistent_for_bump_data() {
    let f = default_field(64, 26);
    let (est, noise) = v_eps_inner_controlled(&f, &bump(), 1.0, &[0.2, 0.0, 0.0], 0.3, 0.25, 400, 0.01, 27, &mut Default::default()).unwrap();
    let plain = v_eps_estimate(&f, &bump(), 1.0, &[0.2, 0.0, 0.0], 0.3, 0.25, 4000, 0.01, 28).unwrap();
    assert!(noise < plain.std_err().powi(2) * 10.0);
    let tol = 4.0 * (plain.std_err().powi(2) + noise).sqrt();
    assert!((plain.mean().im - est).abs() < tol, "{} vs {est}", plain.mean().im);
}

#[test]
fn controlled_u_eps_agrees_with_plain_mean_and_is_quieter() {
    let fld = default_field(64, 31);
    // the phase explains path noise only where f(x+B_t) does not add its own
    for (f, eps, gain) in [(ONE, 0.3, 0.1), (ONE, 0.1, 0.2), (bump(), 0.2, 1.0)] {
        let (est, noise) = u_eps_inner_controlled(&fld, &f, 1.0, &[0.1, 0.0, 0.0], eps, 400, 0.05, 32, &mut Default::default()).unwrap();
        let plain = u_eps_estimate(&fld, &f, 1.0, &[0.1, 0.0, 0.0], eps, 4000, 0.05, 33).unwrap();
        let plain400 = plain.std_err().powi(2) * 10.0;
        assert!(noise < gain * plain400, "{noise} vs {plain400}");
        let tol = 4.0 * (plain.std_err().powi(2) + noise).sqrt();
        assert!((plain.mean() - est).norm() < tol, "{} vs {est}", plain.mean());
    }
}

#[test]
fn controlled_u_eps_is_exact_for_zero_potential() {
    let (est, noise) = u_eps_inner_controlled(&zero_field(), &ONE, 1.0, &[0.0; 3], 0.3, 16, 0.05, 1, &mut Default::default()).unwrap();
    assert_eq!((est, noise), (crate::Complex64::new(1.0, 0.0), 0.0));
}

