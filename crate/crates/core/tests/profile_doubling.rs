use bergman_lab::doubling::{
    doubling_from_power_convexity, find_sigma, find_sigma_with_grid, verify_certificate, DoublingCertificate,
    DoublingOutcome, LADDER_RATIO,
};
use bergman_lab::profile::RadialProfile;
use proptest::prelude::*;
use std::f64::consts::E;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn examples() -> Vec<RadialProfile> {
    vec![
        RadialProfile::exp_inverse(0.5).unwrap(),
        RadialProfile::exp_inverse(1.0).unwrap(),
        RadialProfile::exp_inverse(2.0).unwrap(),
        RadialProfile::double_exp().unwrap(),
        RadialProfile::monomial(2).unwrap(),
    ]
}

fn cert(profile: &RadialProfile) -> DoublingCertificate {
    find_sigma(&profile.lambda(), 0.4, 1e6)
        .unwrap()
        .into_certificate()
        .unwrap()
}

#[test]
fn worked_examples() {
    let de = RadialProfile::double_exp().unwrap();
    assert!(rel(de.log_f(0.25), -E.powi(4)) < 1e-14);
    // f'(1/2) = 4 e^2 exp(-e^2)
    let d = de.derivs(0.5).unwrap();
    assert!(rel(d.f1, 4.0 * E * E * (-E * E).exp()) < 1e-12);
    let p2 = RadialProfile::exp_inverse(2.0).unwrap();
    assert!(rel(p2.lambda().lambda(0.25).unwrap(), 0.0625) < 1e-14);
}

#[test]
fn certificate_survives_a_finer_grid() {
    for f in examples().into_iter().take(4) {
        let c = cert(&f);
        let m = verify_certificate(&f.lambda(), &c, 100_000);
        assert!(m >= -1e-12, "{}: margin {m}", f.name());
    }
}

#[test]
fn larger_rungs_stay_certified() {
    for f in examples().into_iter().take(4) {
        let c = cert(&f);
        for j in 1..6 {
            let mut up = c.clone();
            up.sigma = c.sigma * LADDER_RATIO.powi(j);
            let m = verify_certificate(&f.lambda(), &up, 20_000);
            assert!(m >= -1e-12, "{} at sigma {}: {m}", f.name(), up.sigma);
        }
    }
}

#[test]
fn grid_size_does_not_change_the_rung() {
    let f = RadialProfile::exp_inverse(1.0).unwrap();
    let coarse = find_sigma_with_grid(&f.lambda(), 0.4, 1e6, 2_000)
        .unwrap()
        .into_certificate()
        .unwrap();
    let fine = find_sigma_with_grid(&f.lambda(), 0.4, 1e6, 50_000)
        .unwrap()
        .into_certificate()
        .unwrap();
    assert_eq!(coarse.sigma, fine.sigma);
}

#[test]
fn monomials_leave_witnesses() {
    for m in 1..=3 {
        let f = RadialProfile::monomial(m).unwrap();
        match find_sigma(&f.lambda(), 0.4, 1e6).unwrap() {
            DoublingOutcome::NotDoubling(ev) => {
                assert!(!ev.witnesses.is_empty());
                for w in &ev.witnesses {
                    assert!(w.lhs > w.rhs, "{w:?}");
                }
            }
            DoublingOutcome::Certified(c) => panic!("M={m} certified at {}", c.sigma),
        }
    }
}

#[test]
fn first_power_doubling() {
    for f in examples().into_iter().take(4) {
        let c = cert(&f);
        let view = f.lambda();
        for t in bergman_lab::profile::log_grid(c.t * 1e-40, c.t, 10_000) {
            let ratio = view.g_inverse(2.0 * t).unwrap() / view.g_inverse(t).unwrap();
            assert!(
                ratio <= c.sigma * (1.0 + 1e-12),
                "{} at t = {t}: {ratio} > {}",
                f.name(),
                c.sigma
            );
        }
    }
}

#[test]
fn power_convexity_of_exp_inverse() {
    // chi = Lambda for exp_inverse(2), already convex
    let out = doubling_from_power_convexity(|x| x * x, 0.4, 1.0, 1.0).unwrap();
    assert!(out.sigma_chi >= 2f64.sqrt() * (1.0 - 1e-9));
    assert!(out.sigma_out >= out.sigma_chi);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn log_value_matches_value(idx in 0usize..5, x in 1e-3f64..10.0) {
        let f = &examples()[idx];
        let v = f.eval(x).unwrap();
        if v.value > 1e-300 {
            prop_assert!(rel(v.log_value.exp(), v.value) < 1e-12);
        } else {
            prop_assert!(v.log_value < -690.0);
        }
    }

    #[test]
    fn inverse_round_trip(idx in 0usize..5, x in 2e-2f64..10.0) {
        let f = &examples()[idx];
        let lf = f.log_f(x);
        prop_assume!(lf > -700.0);
        let back = f.f_inverse_log(lf).unwrap();
        prop_assert!(rel(back, x) < 1e-9, "{} at {x}: {back}", f.name());
    }

    #[test]
    fn strictly_increasing(idx in 0usize..5, x in 1e-2f64..9.0, dx in 1e-3f64..1.0) {
        let f = &examples()[idx];
        prop_assert!(f.log_f(x + dx) > f.log_f(x));
    }

    #[test]
    fn lambda_is_minus_inverse_log(idx in 0usize..4, x in 1e-2f64..0.45) {
        let f = &examples()[idx];
        let l = f.lambda().lambda(x).unwrap();
        prop_assert!(rel(l, -1.0 / f.log_f(x)) < 1e-12);
    }

    #[test]
    fn g_inverts_lambda(idx in 0usize..4, x in 1e-2f64..0.45) {
        let f = &examples()[idx];
        let view = f.lambda();
        let back = view.g_inverse(view.lambda(x).unwrap()).unwrap();
        prop_assert!(rel(back, x) < 1e-9);
    }
}
