use bergman_lab::quadrature::{integrate, QuadratureSpec};
use proptest::prelude::*;
use std::f64::consts::{E, PI};

fn spec() -> QuadratureSpec {
    QuadratureSpec::with_rel_tol(1e-11)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn closed_form_battery() {
    type Case = (&'static str, fn(f64) -> f64, f64, f64, f64);
    let cases: [Case; 10] = [
        ("cubic", |x| x.powi(3), 0.0, 1.0, 0.25),
        ("sine", f64::sin, 0.0, PI, 2.0),
        ("exp", f64::exp, 0.0, 1.0, E - 1.0),
        ("arctan", |x| 1.0 / (1.0 + x * x), 0.0, 1.0, PI / 4.0),
        ("log endpoint", f64::ln, 0.0, 1.0, -1.0),
        ("inverse sqrt endpoint", |x| 1.0 / x.sqrt(), 0.0, 1.0, 2.0),
        ("semicircle", |x| (1.0 - x * x).max(0.0).sqrt(), -1.0, 1.0, PI / 2.0),
        (
            "periodic",
            |x| 1.0 / (2.0 + x.cos()),
            0.0,
            2.0 * PI,
            2.0 * PI / 3f64.sqrt(),
        ),
        ("gamma(3) on half line", |x| x * x * (-x).exp(), 0.0, f64::INFINITY, 2.0),
        ("gaussian", |x| (-x * x).exp(), 0.0, f64::INFINITY, PI.sqrt() / 2.0),
    ];
    for (name, f, a, b, exact) in cases {
        let r = integrate(f, a, b, &spec());
        assert!(rel(r.value, exact) < 1e-9, "{name}: {} vs {exact}", r.value);
        assert!(r.error_estimate >= 0.0, "{name}");
    }
}

#[test]
fn scale_covariance() {
    // int_{ca}^{cb} g(x/c) dx = c int_a^b g
    let g = |x: f64| x.sqrt() * (-x).exp() / (1.0 + x * x);
    let base = integrate(g, 0.0, 5.0, &spec()).value;
    for c in [1e-6, 1.0, 1e6] {
        let scaled = integrate(|x| g(x / c), 0.0, 5.0 * c, &spec()).value;
        assert!(rel(scaled, c * base) < 1e-9, "c = {c}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn additive_over_subintervals(a in -3.0f64..0.0, len in 0.1f64..6.0, frac in 0.05f64..0.95, k in 0.5f64..4.0) {
        let f = |x: f64| (k * x).sin().powi(2) + (-(x * x)).exp();
        let b = a + len;
        let m = a + frac * len;
        let whole = integrate(f, a, b, &spec()).value;
        let parts = integrate(f, a, m, &spec()).value + integrate(f, m, b, &spec()).value;
        prop_assert!(rel(parts, whole) < 1e-10);
    }

    #[test]
    fn monomials_exact(n in 0i32..12, b in 0.1f64..3.0) {
        let r = integrate(|x| x.powi(n), 0.0, b, &spec());
        let exact = b.powi(n + 1) / f64::from(n + 1);
        prop_assert!(rel(r.value, exact) < 1e-12);
    }
}
