use gmmee::battery::{
    coulomb_count, fit_ocv, generate_current_profile, measure_voltage, ocv_eval, simulate_trace, state_transition,
    BatteryState, EcmParams, OcvCurve, ProfileKind,
};
use gmmee::linalg::Matrix;
use gmmee::noise::{sample_gaussian, MixedNoiseSpec, NoiseUnit, Silent};
use gmmee::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const REF_COEFFS: [f64; 7] = [
    3.010556935147718,
    2.5576270309884266,
    -12.237530181672337,
    35.43464462283193,
    -51.70879159624435,
    38.35704620565477,
    -11.217339408471256,
];

fn params() -> EcmParams {
    EcmParams::from_amp_hours(0.02, 0.01, 1000.0, 0.015, 6666.666666666667, 3.0, 1.0).unwrap()
}

fn curve() -> OcvCurve {
    OcvCurve::new(REF_COEFFS, 0.0, 1.0).unwrap()
}

#[test]
fn params_validation() {
    assert!(EcmParams::from_amp_hours(0.0, 0.01, 1000.0, 0.015, 6666.0, 3.0, 1.0).is_err());
    assert!(EcmParams::from_amp_hours(0.02, 0.01, 1000.0, 0.015, 6666.0, 3.0, 1.2).is_err());
    assert!(EcmParams::from_amp_hours(0.02, 0.01, -1.0, 0.015, 6666.0, 3.0, 1.0).is_err());
    let p = params();
    assert_eq!(p.q_max, 10_800.0);
    assert!((p.tau1() - 10.0).abs() < 1e-12 && (p.tau2() - 100.0).abs() < 1e-9);
    assert!(OcvCurve::new(REF_COEFFS, 0.5, 0.4).is_err());
}

#[test]
fn transition_examples() {
    let p = params();
    let s = BatteryState::new(0.6, 0.02, 0.01);
    let z = state_transition(&s, 0.0, 1.0, &p).unwrap();
    assert_eq!(z.soc, 0.6);
    assert_eq!(z.u1, 0.02 * (-0.1f64).exp());
    assert!((z.u2 - 0.01 * (-0.01f64).exp()).abs() < 1e-18);

    let same = state_transition(&s, 4.0, 0.0, &p).unwrap();
    assert_eq!(same, s);

    let full = state_transition(&BatteryState::new(1.0, 0.0, 0.0), p.q_max / 3600.0, 3600.0, &p).unwrap();
    assert!(full.soc.abs() < 1e-15);
}

#[test]
fn transition_does_not_clamp() {
    let p = params();
    let s = state_transition(&BatteryState::new(0.01, 0.0, 0.0), 30.0, 10.0, &p).unwrap();
    assert!(s.soc < 0.0);
    let mut c = s;
    assert!(c.clamp_soc());
    assert_eq!(c.soc, 0.0);
}

#[test]
fn voltage_examples() {
    let p = params();
    let c = curve();
    let s = BatteryState::new(0.42, 0.0, 0.0);
    assert_eq!(measure_voltage(&s, 0.0, &p, &c), ocv_eval(&c, 0.42));

    let s = BatteryState::new(0.62, 0.013, -0.004);
    let mut p2 = p;
    p2.r0 *= 2.0;
    let drop = measure_voltage(&s, 2.5, &p, &c) - measure_voltage(&s, 2.5, &p2, &c);
    assert!((drop - 2.5 * p.r0).abs() < 1e-15);

    // Exact rational evaluation of OCV(0.62) − 2.5·0.02 − 0.013 + 0.004.
    assert!((measure_voltage(&s, 2.5, &p, &c) - 3.514_449_704_122_437).abs() < 1e-13);
}

#[test]
fn ocv_examples() {
    let flat = OcvCurve::new([3.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0, 1.0).unwrap();
    for s in [0.0, 0.3, 1.0] {
        assert_eq!(ocv_eval(&flat, s), 3.2);
    }
    let lin = OcvCurve::new([3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0, 1.0).unwrap();
    assert_eq!(ocv_eval(&lin, 0.5), 3.5);
    // Exact rational power sum of the reference coefficients at 0.37.
    assert!((ocv_eval(&curve(), 0.37) - 3.344_528_415_468_872_6).abs() < 1e-13);
    assert!(curve().is_monotone());
    assert!(!OcvCurve::new([3.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0, 1.0).unwrap().is_monotone());
}

#[test]
fn fit_recovers_polynomials() {
    let truth = [3.1, 0.8, -1.2, 2.0, -0.5, 0.3, 0.1];
    let c = OcvCurve::new(truth, 0.0, 1.0).unwrap();
    let pts: Vec<(f64, f64)> = (0..7).map(|i| (i as f64 / 6.0, c.eval(i as f64 / 6.0))).collect();
    let fit = fit_ocv(&pts, 6).unwrap();
    for (a, b) in fit.curve.coeffs.iter().zip(truth) {
        assert!((a - b).abs() < 1e-8, "{:?}", fit.curve.coeffs);
    }

    let pts: Vec<(f64, f64)> = (0..20).map(|i| (0.05 * i as f64, 3.0 + 1.2 * 0.05 * i as f64)).collect();
    let fit = fit_ocv(&pts, 6).unwrap();
    assert!((fit.curve.coeffs[0] - 3.0).abs() < 1e-8 && (fit.curve.coeffs[1] - 1.2).abs() < 1e-8);
    assert!(fit.curve.coeffs[2..].iter().all(|c| c.abs() < 1e-8));
    assert!(fit.rmse < 1e-10);
}

#[test]
fn fit_noisy_reference_points() {
    let truth = curve();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..19)
            .map(|k| {
                let s = 0.1 + 0.05 * k as f64;
                (s, truth.eval(s) + sample_gaussian(0.0, 1e-6, &mut rng))
            })
            .collect();
        let fit = fit_ocv(&pts, 6).unwrap();
        for k in 0..=900 {
            let s = 0.1 + 1e-3 * k as f64;
            assert!((fit.curve.eval(s) - truth.eval(s)).abs() < 5e-3, "seed {seed} soc {s}");
        }
    }
}

#[test]
fn fit_rejects_bad_inputs() {
    let clustered: Vec<(f64, f64)> = (0..7).map(|i| (0.5 + 0.01 * i as f64, 3.7)).collect();
    assert!(matches!(fit_ocv(&clustered, 6), Err(Error::InvalidParameter(_))));
    let nearly: Vec<(f64, f64)> =
        [0.0, 0.4].into_iter().chain((0..5).map(|i| 0.2 + 1e-9 * i as f64)).map(|s| (s, 3.5 + s)).collect();
    assert!(matches!(fit_ocv(&nearly, 6), Err(Error::IllConditioned { .. })));
    assert!(fit_ocv(&[(0.0, 3.0), (1.0, 4.0)], 6).is_err());
}

#[test]
fn fit_residuals_orthogonal_to_vandermonde() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let truth = curve();
    let pts: Vec<(f64, f64)> = (0..41)
        .map(|k| {
            let s = 0.025 * k as f64;
            (s, truth.eval(s) + sample_gaussian(0.0, 1e-4, &mut rng))
        })
        .collect();
    let fit = fit_ocv(&pts, 6).unwrap();
    for j in 0..7 {
        let dot: f64 = pts.iter().map(|&(s, v)| (v - fit.curve.eval(s)) * s.powi(j)).sum();
        assert!(dot.abs() < 1e-8, "column {j}: {dot}");
    }
}

#[test]
fn coulomb_examples() {
    let p = params();
    assert!(coulomb_count(0.8, &[0.0; 50], 0.1, &p).iter().all(|&s| s == 0.8));
    let i = p.q_max / 3600.0;
    let tr = coulomb_count(1.0, &vec![i; 18_000], 0.1, &p);
    assert!((tr.last().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn coulomb_matches_trapezoid_increments() {
    let p = params();
    let dt = 0.1;
    let cur = generate_current_profile(ProfileKind::UrbanLike, 600.0, dt, 6.0, 4).unwrap();
    let left = coulomb_count(0.9, &cur, dt, &p);
    let max_di = cur.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let bound = p.lambda * dt * max_di / (2.0 * p.q_max);
    for k in 1..cur.len() {
        let trap = p.lambda * dt * 0.5 * (cur[k - 1] + cur[k]) / p.q_max;
        let riemann = left[k - 1] - left[k];
        assert!((riemann - trap).abs() <= bound * (1.0 + 1e-9) + 1e-16);
    }
}

#[test]
fn profile_examples() {
    let c = generate_current_profile(ProfileKind::Constant, 5.0, 0.1, 3.0, 0).unwrap();
    assert!(c.len() == 50 && c.iter().all(|&v| v == 3.0));
    let p = generate_current_profile(ProfileKind::Pulse { period: 20.0, duty: 0.5 }, 200.0, 0.1, 5.0, 0).unwrap();
    assert!((p.iter().sum::<f64>() / p.len() as f64 - 2.5).abs() < 1e-12);
    let u = generate_current_profile(ProfileKind::UrbanLike, 1800.0, 0.1, 6.0, 11).unwrap();
    assert_eq!(u.len(), 18_000);
    assert!(u.iter().all(|v| v.abs() <= 6.0));
    let h = generate_current_profile(ProfileKind::HighwayLike, 1800.0, 0.1, 8.0, 11).unwrap();
    assert!(h.iter().all(|v| v.abs() <= 8.0));
    assert!(h.iter().sum::<f64>() / h.len() as f64 > u.iter().sum::<f64>() / u.len() as f64);
    assert_eq!(u, generate_current_profile(ProfileKind::UrbanLike, 1800.0, 0.1, 6.0, 11).unwrap());
    assert!(generate_current_profile(ProfileKind::Constant, 0.05, 0.1, 1.0, 0).is_err());
}

#[test]
fn noiseless_trace_is_deterministic_model_output() {
    let p = params();
    let c = curve();
    let cur = generate_current_profile(ProfileKind::UrbanLike, 120.0, 0.1, 6.0, 2).unwrap();
    let init = BatteryState::new(0.9, 0.0, 0.0);
    let tr = simulate_trace(&p, &c, &cur, 0.1, init, &Matrix::zeros(3, 3), &Silent, 5).unwrap();
    let mut s = init;
    for (k, &i) in cur.iter().enumerate() {
        s = state_transition(&s, i, 0.1, &p).unwrap();
        assert_eq!(tr.states[k], s);
        assert_eq!(tr.voltage[k], measure_voltage(&s, i, &p, &c));
        assert_eq!(tr.t[k], k as f64 * 0.1);
    }
    assert!(tr.soc_true.iter().zip(&tr.states).all(|(a, s)| *a == s.soc));
    assert_eq!(tr.clamped_steps, 0);
}

#[test]
fn trace_determinism_and_seed_sensitivity() {
    let p = params();
    let c = curve();
    let cur = generate_current_profile(ProfileKind::UrbanLike, 60.0, 0.1, 6.0, 2).unwrap();
    let q = Matrix::identity(3).scaled(1e-8);
    let noise = MixedNoiseSpec::uniform_mixture(NoiseUnit::Millivolt);
    let init = BatteryState::new(0.9, 0.0, 0.0);
    let a = simulate_trace(&p, &c, &cur, 0.1, init, &q, &noise, 3).unwrap();
    let b = simulate_trace(&p, &c, &cur, 0.1, init, &q, &noise, 3).unwrap();
    let d = simulate_trace(&p, &c, &cur, 0.1, init, &q, &noise, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.voltage, d.voltage);
}

#[test]
fn trace_clamps_truth() {
    let p = params();
    let cur = vec![-6.0; 600];
    let tr = simulate_trace(&p, &curve(), &cur, 1.0, BatteryState::new(0.95, 0.0, 0.0), &Matrix::zeros(3, 3), &Silent, 0)
        .unwrap();
    assert!(tr.clamped_steps > 0);
    assert!(tr.soc_true.iter().all(|s| (0.0..=1.0).contains(s)));
}

#[test]
fn process_noise_statistics() {
    // 1000 short traces of 100 zero-current steps: 1e5 increments per component.
    let p = params();
    let c = curve();
    let q = Matrix::identity(3).scaled(1e-6);
    let cur = vec![0.0; 100];
    let mut sums = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut n = 0.0;
    for seed in 0..1000 {
        let init = BatteryState::new(0.5, 0.0, 0.0);
        let tr = simulate_trace(&p, &c, &cur, 0.1, init, &q, &Silent, seed).unwrap();
        let mut prev = init;
        for s in &tr.states {
            let det = state_transition(&prev, 0.0, 0.1, &p).unwrap();
            let w = [s.soc - det.soc, s.u1 - det.u1, s.u2 - det.u2];
            for j in 0..3 {
                sums[j] += w[j];
                sq[j] += w[j] * w[j];
            }
            n += 1.0;
            prev = *s;
        }
    }
    for j in 0..3 {
        let mean = sums[j] / n;
        let var = sq[j] / n - mean * mean;
        assert!(mean.abs() < 3.0 * 1e-3 / n.sqrt());
        assert!((var.sqrt() / 1e-3 - 1.0).abs() < 0.01, "component {j}: {}", var.sqrt());
    }
}

proptest! {
    #[test]
    fn step_composition(i in -10.0f64..10.0, k in 1usize..50, dt in 0.01f64..2.0, u1 in -0.1f64..0.1, u2 in -0.1f64..0.1) {
        let p = params();
        let s0 = BatteryState::new(0.7, u1, u2);
        let mut s = s0;
        for _ in 0..k {
            s = state_transition(&s, i, dt, &p).unwrap();
        }
        let once = state_transition(&s0, i, k as f64 * dt, &p).unwrap();
        prop_assert!((s.soc - once.soc).abs() < 1e-13);
        prop_assert!((s.u1 - once.u1).abs() < 1e-12);
        prop_assert!((s.u2 - once.u2).abs() < 1e-12);
    }

    #[test]
    fn charge_conservation(i in -20.0f64..20.0, dt in 1e-3f64..10.0, soc in 0.0f64..1.0) {
        let p = params();
        let s = state_transition(&BatteryState::new(soc, 0.0, 0.0), i, dt, &p).unwrap();
        prop_assert!(((s.soc - soc) * p.q_max + i * dt).abs() <= 1e-12 * p.q_max);
    }

    #[test]
    fn voltage_affine(soc in 0.0f64..1.0, i in -10.0f64..10.0, u1 in -0.1f64..0.1, u2 in -0.1f64..0.1, t in -3.0f64..3.0) {
        let p = params();
        let c = curve();
        let v = |i: f64, u1: f64, u2: f64| measure_voltage(&BatteryState::new(soc, u1, u2), i, &p, &c);
        let base = v(0.0, 0.0, 0.0);
        let lin = v(i, u1, u2) - base;
        prop_assert!((v(t * i, t * u1, t * u2) - base - t * lin).abs() < 1e-12);
    }
}
