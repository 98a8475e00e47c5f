//! Closed-form predictions against independent numerical references.

use proptest::prelude::*;
use specsync::analysis::{asymptotic_coefficients, discriminant, segment_regimes, spearman, Branch, Riccati};
use specsync::dynamics::{integrate_vertex, CoefficientTrajectory, OscillatorSystem};
use specsync::generators::{random_connected, rng_from_seed};
use specsync::matrix::dot;
use specsync::SpectralBasis;

/// Scalar RK4 for `α̇ = ω − bα + aα²` with a fine fixed step.
fn riccati_reference(r: &Riccati, alpha0: f64, t: f64) -> f64 {
    let steps = ((t / 1e-3).ceil() as usize).max(1);
    let h = t / steps as f64;
    let f = |x: f64| r.omega - r.b * x + r.a * x * x;
    let mut x = alpha0;
    for _ in 0..steps {
        let k1 = f(x);
        let k2 = f(x + 0.5 * h * k1);
        let k3 = f(x + 0.5 * h * k2);
        let k4 = f(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stable_branch_matches_ode(omega in -1.0f64..1.0, a in -0.5f64..0.5, b in 0.5f64..2.0, t in 0.0f64..8.0) {
        let r = Riccati { omega, a, b };
        prop_assume!(r.discriminant() > 1e-3 && a.abs() > 1e-3);
        // Start near the stable root, well inside its basin.
        let root = r.stable_root().unwrap();
        let alpha0 = root + 0.05;
        let unstable = (b + r.discriminant().sqrt()) / (2.0 * a);
        prop_assume!((alpha0 - root).abs() < (unstable - root).abs() * 0.5);
        let v = r.solve(alpha0, t, 0.0);
        prop_assert_eq!(v.branch, Branch::Stable);
        prop_assert!(v.valid);
        prop_assert!((v.value - riccati_reference(&r, alpha0, t)).abs() <= 1e-7);
        prop_assert!(r.rate(root).abs() <= 1e-12);
    }

    #[test]
    fn tangent_branch_matches_ode_in_window(omega in 0.2f64..1.0, a in 0.2f64..1.0, b in 0.0f64..0.5, alpha0 in -0.5f64..0.5) {
        let r = Riccati { omega, a, b };
        prop_assume!(r.discriminant() < -1e-3);
        let window = r.tangent_window(alpha0, std::f64::consts::FRAC_PI_4).unwrap();
        prop_assume!(window > 0.0);
        for k in 1..=5 {
            let t = window * k as f64 / 5.0;
            let v = r.solve(alpha0, t, std::f64::consts::FRAC_PI_4);
            prop_assert_eq!(v.branch, Branch::Tangent);
            prop_assert!(v.valid || k == 5);
            let reference = riccati_reference(&r, alpha0, t);
            prop_assert!((v.value - reference).abs() <= 1e-6 * (1.0 + reference.abs()));
        }
        // Past the pole the closed form is flagged invalid.
        let s = (-r.discriminant()).sqrt();
        let pole = 2.0 * (std::f64::consts::FRAC_PI_2 - ((2.0 * a * alpha0 - b) / s).atan()) / s;
        prop_assert!(!r.solve(alpha0, pole * 1.01, 0.0).valid);
    }

    #[test]
    fn linear_branch_is_exponential(omega in -1.0f64..1.0, b in 0.1f64..2.0, alpha0 in -1.0f64..1.0, t in 0.0f64..10.0) {
        let r = Riccati { omega, a: 0.0, b };
        let v = r.solve(alpha0, t, 0.0);
        prop_assert_eq!(v.branch, Branch::Linear);
        let expected = omega / b + (alpha0 - omega / b) * (-b * t).exp();
        prop_assert!((v.value - expected).abs() <= 1e-12);
    }

    #[test]
    fn critical_sigma_zeroes_discriminant(seed in any::<u64>(), n in 3usize..9) {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let g = random_connected(n, 0.5, [0.5, 1.5], &mut rng).unwrap();
        let omega: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let basis = SpectralBasis::new(&g).unwrap();
        let sys = OscillatorSystem::new(g, omega, 1.0).unwrap();
        let d = discriminant(&sys, &basis, 1).unwrap();
        prop_assume!(d.critical_sigma > 0.0);
        let at = discriminant(&sys.with_sigma(d.critical_sigma).unwrap(), &basis, 1).unwrap();
        prop_assert!(at.delta.abs() <= 1e-9 * (1.0 + d.delta.abs()));
    }

    #[test]
    fn asymptotics_from_projection(seed in any::<u64>(), n in 2usize..12, sigma in 0.5f64..3.0) {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let g = random_connected(n, 0.4, [0.5, 1.5], &mut rng).unwrap();
        let omega: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let basis = SpectralBasis::new(&g).unwrap();
        let pred = asymptotic_coefficients(&OscillatorSystem::new(g, omega.clone(), sigma).unwrap(), &basis).unwrap();
        for m in &pred.modes {
            let expected = dot(&omega, basis.vertex_vector(m.mode)) / (sigma * basis.eigenvalue(m.mode));
            prop_assert!((m.alpha_inf - expected).abs() <= 1e-12);
            prop_assert!((m.decay_rate - sigma * basis.eigenvalue(m.mode)).abs() <= 1e-12);
        }
    }

    #[test]
    fn spearman_properties(xs in proptest::collection::vec(-100.0f64..100.0, 3..30)) {
        let ys: Vec<f64> = xs.iter().map(|x| x.powi(3) + 2.0).collect();
        let neg: Vec<f64> = xs.iter().map(|x| 1.0 - 3.0 * x).collect();
        let distinct = {
            let mut s = xs.clone();
            s.sort_by(f64::total_cmp);
            s.windows(2).all(|w| w[0] != w[1])
        };
        prop_assume!(distinct);
        prop_assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!((spearman(&xs, &neg).unwrap() + 1.0).abs() <= 1e-12);
    }
}

#[test]
fn uniform_frequencies_predict_full_sync() {
    let g = random_connected(8, 0.4, [0.5, 1.5], &mut rng_from_seed(3)).unwrap();
    let basis = SpectralBasis::new(&g).unwrap();
    let sys = OscillatorSystem::new(g, vec![0.7; 8], 1.3).unwrap();
    let pred = asymptotic_coefficients(&sys, &basis).unwrap();
    assert!(pred.modes.iter().all(|m| m.alpha_inf.abs() < 1e-12));
}

#[test]
fn doubling_sigma_halves_limits() {
    let mut rng = rng_from_seed(5);
    let g = random_connected(9, 0.4, [0.5, 1.5], &mut rng).unwrap();
    let basis = SpectralBasis::new(&g).unwrap();
    let omega: Vec<f64> = (0..9).map(|i| 0.1 * (i as f64 - 4.0)).collect();
    let a = asymptotic_coefficients(&OscillatorSystem::new(g.clone(), omega.clone(), 1.0).unwrap(), &basis).unwrap();
    let b = asymptotic_coefficients(&OscillatorSystem::new(g, omega, 2.0).unwrap(), &basis).unwrap();
    for (x, y) in a.modes.iter().zip(&b.modes) {
        assert!((x.alpha_inf - 2.0 * y.alpha_inf).abs() < 1e-12);
    }
}

#[test]
fn linear_regime_decays_at_sigma_lambda() {
    // Tiny amplitudes: α_r(t) ≈ α_r(0)e^{−σλ_r t}.
    let g = random_connected(7, 0.5, [0.5, 1.5], &mut rng_from_seed(11)).unwrap();
    let basis = SpectralBasis::new(&g).unwrap();
    let sys = OscillatorSystem::new(g, vec![0.0; 7], 1.5).unwrap();
    let mut alpha0 = vec![0.0; 7];
    alpha0[2] = 1e-4;
    let traj = integrate_vertex(&sys, &basis.reconstruct(&alpha0).unwrap(), 0.01, 200).unwrap();
    let coeffs = traj.decompose(&basis).unwrap();
    let expected = 1e-4 * (-1.5 * basis.eigenvalue(2) * 2.0).exp();
    assert!((coeffs.last()[2] - expected).abs() < 1e-10);
}

#[test]
fn regimes_from_synthetic_series() {
    // Mode 1 active until t = 2, mode 2 until t = 4, then nothing.
    let coeffs: Vec<Vec<f64>> = (0..=600)
        .map(|s| {
            let t = s as f64 * 0.01;
            vec![0.0, if t < 2.0 { 1.0 } else { 0.0 }, if t < 4.0 { 1.0 } else { 0.0 }]
        })
        .collect();
    let sim = CoefficientTrajectory {
        t0: 0.0,
        dt: 0.01,
        coeffs,
    };
    let seg = segment_regimes(&sim, 0.5, 0.5).unwrap();
    let active: Vec<Vec<usize>> = seg.regimes.iter().map(|r| r.active.clone()).collect();
    assert_eq!(active, vec![vec![1, 2], vec![2], vec![]]);
    assert!((seg.regimes[1].t_start - 2.0).abs() < 0.011);
    assert!(segment_regimes(&sim, 0.0, 0.5).is_err());
}
