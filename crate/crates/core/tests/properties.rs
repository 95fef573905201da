use approx::assert_relative_eq;
use hypdamp_core::coefficients::{regularize, synthesize_hoelder, Coefficient};
use hypdamp_core::math::lin_space;
use hypdamp_core::mode_solver::{integrate, ModeParams, SolverOptions};
use hypdamp_core::phase_diagram::growth_rate;
use hypdamp_core::spaces::{check_modulus, default_modulus_grid, ContinuityModulus, ModulusDefect};
use hypdamp_core::theorem_verifier::super_r_star;
use proptest::prelude::*;

fn sampled(horizon: f64, n: usize) -> SolverOptions {
    SolverOptions {
        sample_times: lin_space(0.0, horizon, n),
        ..SolverOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // For constant c, F' = -4a u'^2, hence -4a t <= ln F(t) - ln F(0) <= 0.
    #[test]
    fn weighted_energy_decays_no_faster_than_4a(
        lambda in 1.0f64..200.0,
        sigma in 0.0f64..1.2,
        delta in 0.05f64..2.0,
        c0 in 0.2f64..3.0,
        u0 in -2.0f64..2.0,
        u1 in -2.0f64..2.0,
    ) {
        prop_assume!(u0.abs() + u1.abs() > 1e-3);
        let p = ModeParams::new(lambda, sigma, delta).unwrap();
        let a = p.damping();
        let horizon = (2.0 / a).min(1.0);
        let mut opts = sampled(horizon, 41);
        opts.closed_form_segments = false;
        let tr = integrate(&p, &Coefficient::constant(c0), (u0, u1), (0.0, horizon), &opts).unwrap();
        let f0 = tr.records[0].log_f_weighted;
        let mut prev = f0;
        for r in &tr.records[1..] {
            let tol = 1e-7 * (1.0 + r.log_f_weighted.abs());
            prop_assert!(r.log_f_weighted <= prev + tol, "increase at t = {}", r.t);
            prop_assert!(r.log_f_weighted - f0 >= -4.0 * a * r.t - tol);
            prev = r.log_f_weighted;
        }
    }

    #[test]
    fn growth_rate_ignores_data_scale(
        lambda in 5.0f64..100.0,
        sigma in 0.0f64..0.5,
        scale in -30.0f64..30.0,
        seed in 0u64..1000,
    ) {
        let c = synthesize_hoelder(0.5, 0.25, seed, 1.0).unwrap();
        let p = ModeParams::new(lambda, sigma, 0.5).unwrap();
        let opts = sampled(1.0, 33);
        let k = scale.exp2();
        let g1 = growth_rate(&integrate(&p, &c, (1.0, 0.0), (0.0, 1.0), &opts).unwrap());
        let g2 = growth_rate(&integrate(&p, &c, (k, 0.0), (0.0, 1.0), &opts).unwrap());
        prop_assert!((g1 - g2).abs() <= 1e-6 * (1.0 + g1.abs()), "{g1} vs {g2}");
    }

    // Underdamped constant coefficient: ln E falls at rate 2a.
    #[test]
    fn constant_coefficient_decay_exponent(
        lambda in 10.0f64..1000.0,
        sigma in 0.0f64..0.45,
        delta in 0.1f64..1.0,
    ) {
        let p = ModeParams::new(lambda, sigma, delta).unwrap();
        let a = p.damping();
        prop_assume!(a < 0.25 * lambda);
        let horizon = 10.0 / a;
        let tr = integrate(&p, &Coefficient::constant(1.0), (1.0, 0.0), (0.0, horizon), &sampled(horizon, 401)).unwrap();
        let n = tr.records.len() as f64;
        let (mut st, mut se, mut stt, mut ste) = (0.0, 0.0, 0.0, 0.0);
        for r in &tr.records {
            st += r.t;
            se += r.log_e_classic;
            stt += r.t * r.t;
            ste += r.t * r.log_e_classic;
        }
        let slope = (n * ste - st * se) / (n * stt - st * st);
        prop_assert!((slope + 2.0 * a).abs() <= 0.05 * 2.0 * a, "slope {slope}, a {a}");
    }

    #[test]
    fn regularization_stays_in_bounds_and_within_modulus(
        alpha in 0.05f64..0.95,
        spread in 0.0f64..0.5,
        seed in 0u64..10_000,
        eps in 1e-4f64..0.5,
        t in 0.0f64..20.0,
    ) {
        let c = synthesize_hoelder(alpha, spread, seed, 1.0).unwrap();
        let ce = regularize(&c, eps).unwrap();
        let v = ce.eval(t);
        prop_assert!(v >= c.mu1 - 1e-12 && v <= c.mu2 + 1e-12);
        let w = c.modulus.as_ref().unwrap().eval(eps);
        prop_assert!((v - c.eval(t)).abs() <= w * (1.0 + 1e-9) + 1e-14);
        prop_assert!(ce.derivative(t).abs() <= w / eps * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn hoelder_moduli_pass_the_check(alpha in 0.01f64..=1.0, m in 1e-3f64..1e3) {
        let w = ContinuityModulus::hoelder(alpha, m).unwrap();
        prop_assert!(check_modulus(&w, &default_modulus_grid()).unwrap().passed());
    }

    // Every constraint on r grows with delta except 2 delta r <= 1, so
    // r* is monotone until that cap binds.
    #[test]
    fn super_r_star_monotone_below_the_cap(
        lambda in 1.0f64..1.5,
        sigma in 0.5f64..1.0,
        mu2 in 0.5f64..4.0,
        f1 in 0.5f64..1.0,
        f2 in 0.5f64..1.0,
    ) {
        // The cap is slack only for 4 delta^2 lambda^(4s-2) < 2 mu2.
        let (d1, d2) = (f1.min(f2) * mu2.sqrt(), f1.max(f2) * mu2.sqrt());
        let p1 = ModeParams::new(lambda, sigma, d1).unwrap();
        let p2 = ModeParams::new(lambda, sigma, d2).unwrap();
        if let (Some(r1), Some(r2)) = (super_r_star(&p1, mu2), super_r_star(&p2, mu2)) {
            prop_assume!(r2 < 0.5 / d2 * (1.0 - 1e-8));
            prop_assert!(r1 <= r2 * (1.0 + 1e-9), "r*({d1}) = {r1} > r*({d2}) = {r2}");
        }
    }
}

#[test]
fn super_r_star_turns_down_at_the_cap() {
    let r = |d: f64| super_r_star(&ModeParams::new(100.0, 1.0, d).unwrap(), 1.0).unwrap();
    assert_relative_eq!(r(1.0), 0.5, max_relative = 1e-9);
    assert_relative_eq!(r(4.0), 0.125, max_relative = 1e-9);
    assert!(r(4.0) < r(1.0));
}

#[test]
fn squared_modulus_is_rejected() {
    let w = ContinuityModulus::Custom(|x| x * x);
    let rep = check_modulus(&w, &default_modulus_grid()).unwrap();
    assert!(rep.violations.iter().all(|v| v.defect == ModulusDefect::RatioDecreasing));
    assert!(!rep.passed());
}

#[test]
fn log_type_modulus_passes() {
    let w = ContinuityModulus::LogType { m: 2.0 };
    assert!(check_modulus(&w, &default_modulus_grid()).unwrap().passed());
}
