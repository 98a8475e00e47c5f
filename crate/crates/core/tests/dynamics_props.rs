//! Integrator invariants: basis equivalence, orientation independence,
//! conserved mean drift, and exact CSV round-trips.

use std::f64::consts::PI;

use proptest::prelude::*;
use specsync::dynamics::{
    integrate_coefficient, integrate_coefficient_oriented, integrate_vertex, read_series_csv, rezero, wrap_angle,
    OscillatorSystem, SeriesKind,
};
use specsync::generators::{random_connected, rng_from_seed};
use specsync::{Error, SpectralBasis, WeightedGraph};

fn system(seed: u64, n: usize, sigma: f64, lag: bool) -> (OscillatorSystem, Vec<f64>) {
    use rand::Rng;
    let mut rng = rng_from_seed(seed);
    let g = random_connected(n, 0.4, [0.5, 1.5], &mut rng).unwrap();
    let omega: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let theta0: Vec<f64> = (0..n).map(|_| rng.gen_range(-PI..PI)).collect();
    let beta: Vec<f64> = (0..g.m())
        .map(|_| if lag { rng.gen_range(-0.3..0.3) } else { 0.0 })
        .collect();
    (
        OscillatorSystem::new(g, omega, sigma).unwrap().with_beta(beta).unwrap(),
        theta0,
    )
}

/// Right-hand side written directly from the model, for a one-step check.
fn reference_velocity(sys: &OscillatorSystem, theta: &[f64]) -> Vec<f64> {
    let mut out = sys.omega().to_vec();
    for (a, e) in sys.graph().edges().iter().enumerate() {
        let b = sys.beta()[a];
        // β_ji = −β_ij.
        out[e.i] -= sys.sigma() * e.w * (theta[e.i] - theta[e.j] + b).sin();
        out[e.j] -= sys.sigma() * e.w * (theta[e.j] - theta[e.i] - b).sin();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn velocity_matches_model(seed in any::<u64>(), n in 2usize..12, sigma in 0.0f64..3.0, lag in any::<bool>()) {
        let (sys, theta) = system(seed, n, sigma, lag);
        let mut out = vec![0.0; n];
        sys.vertex_velocity(&theta, &mut out);
        for (a, b) in out.iter().zip(reference_velocity(&sys, &theta)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn bases_agree(seed in any::<u64>(), n in 2usize..10, sigma in 0.5f64..2.0, lag in any::<bool>()) {
        let (sys, theta0) = system(seed, n, sigma, lag);
        let basis = SpectralBasis::new(sys.graph()).unwrap();
        let v = integrate_vertex(&sys, &theta0, 0.01, 500).unwrap();
        let alpha0 = basis.decompose(&theta0).unwrap();
        let c = integrate_coefficient(&sys, &basis, &alpha0, 0.01, 500).unwrap();
        prop_assert!(v.max_abs_diff(&c.reconstruct(&basis).unwrap()).unwrap() <= 1e-6);
    }

    #[test]
    fn orientation_does_not_matter(seed in any::<u64>(), n in 2usize..10, lag in any::<bool>(), flips in any::<u64>()) {
        let (sys, theta0) = system(seed, n, 1.0, lag);
        let basis = SpectralBasis::new(sys.graph()).unwrap();
        let alpha0 = basis.decompose(&theta0).unwrap();
        let flip: Vec<bool> = (0..sys.graph().m()).map(|a| flips >> (a % 64) & 1 == 1).collect();
        let a = integrate_coefficient(&sys, &basis, &alpha0, 0.01, 300).unwrap();
        let b = integrate_coefficient_oriented(&sys, &basis, &flip, &alpha0, 0.01, 300).unwrap();
        for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
            for (p, q) in x.iter().zip(y) {
                prop_assert!((p - q).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn mean_phase_drifts_at_mean_frequency(seed in any::<u64>(), n in 2usize..12, sigma in 0.0f64..3.0) {
        // Without lag the coupling is antisymmetric and cancels in the sum.
        let (sys, theta0) = system(seed, n, sigma, false);
        let traj = integrate_vertex(&sys, &theta0, 0.01, 400).unwrap();
        let m0: f64 = theta0.iter().sum::<f64>() / n as f64;
        for (s, st) in traj.states.iter().enumerate() {
            let m: f64 = st.iter().sum::<f64>() / n as f64;
            prop_assert!((m - m0 - sys.mean_omega() * traj.time(s)).abs() <= 1e-9);
        }
    }

    #[test]
    fn uncoupled_phases_grow_linearly(seed in any::<u64>(), n in 1usize..10) {
        let (sys, theta0) = system(seed, n, 0.0, false);
        let traj = integrate_vertex(&sys, &theta0, 0.05, 200).unwrap();
        for (s, st) in traj.states.iter().enumerate() {
            for i in 0..n {
                prop_assert!((st[i] - theta0[i] - sys.omega()[i] * traj.time(s)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact(seed in any::<u64>(), n in 1usize..8) {
        let (sys, theta0) = system(seed, n, 1.0, true);
        let traj = integrate_vertex(&sys, &theta0, 0.01, 50).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let (kind, times, rows) = read_series_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(kind, SeriesKind::Theta);
        prop_assert_eq!(rows, traj.states.clone());
        for (s, t) in times.iter().enumerate() {
            prop_assert_eq!(*t, traj.time(s));
        }
    }

    #[test]
    fn wrap_angle_range(x in -1e4f64..1e4) {
        let w = wrap_angle(x);
        prop_assert!(w > -PI && w <= PI);
        let turns = (x - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() <= 1e-9);
    }

    #[test]
    fn rezero_keeps_differences_mod_two_pi(seed in any::<u64>(), n in 2usize..8, at in 0usize..50) {
        let (sys, theta0) = system(seed, n, 1.0, false);
        let traj = integrate_vertex(&sys, &theta0, 0.01, 50).unwrap();
        let rz = rezero(&traj, at).unwrap();
        prop_assert_eq!(rz.len(), traj.len() - at);
        for (a, b) in rz.states.iter().zip(&traj.states[at..]) {
            for i in 0..n {
                prop_assert!(wrap_angle(a[i] - b[i] - (a[0] - b[0])).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let g = WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap();
    assert!(OscillatorSystem::new(g.clone(), vec![0.0], 1.0).is_err());
    assert!(OscillatorSystem::new(g.clone(), vec![0.0, 0.0], -1.0).is_err());
    let sys = OscillatorSystem::new(g, vec![0.0, 1.0], 1.0).unwrap();
    assert!(integrate_vertex(&sys, &[0.0, 0.0], 0.0, 10).is_err());
    assert!(integrate_vertex(&sys, &[0.0], 0.01, 10).is_err());
}

#[test]
fn blow_up_is_reported() {
    let g = WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap();
    let sys = OscillatorSystem::new(g, vec![1e308, -1e308], 1.0).unwrap();
    match integrate_vertex(&sys, &[0.0, 0.0], 10.0, 5) {
        Err(Error::BlowUp { .. }) => {}
        other => panic!("expected blow-up, got {other:?}"),
    }
}

#[test]
fn two_oscillators_lock_at_arcsin() {
    // θ₁ − θ₀ → arcsin(Δω / 2σw).
    let g = WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap();
    let sys = OscillatorSystem::new(g, vec![-0.25, 0.25], 1.0).unwrap();
    let traj = integrate_vertex(&sys, &[0.0, 0.0], 0.01, 3000).unwrap();
    let last = traj.last();
    assert!((last[1] - last[0] - (0.25_f64).asin()).abs() < 1e-9);
}
