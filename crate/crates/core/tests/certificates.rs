use bergman_lab::certificates::{candidate_norm_sq, cut_radius, default_norm_spec, Candidate, DomainTag};
use bergman_lab::doubling::find_sigma;
use bergman_lab::kernel::{
    monte_carlo_kernel, ApproachRegion, InscribedBidisc, MonteCarloConfig, SlicingConfig, SlicingKernel,
};
use bergman_lab::metric::{metric_eval, metric_lower_certificate, metric_reference};
use bergman_lab::profile::RadialProfile;
use bergman_lab::quadrature::{integrate, QuadratureSpec};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `||phi||^2` over `Omega_F` cut by `D(0, a) x D(0, 1)` by plain nested
/// quadrature of `|phi|^2`; the angle in `zeta` uses an 8-point trapezoid,
/// exact for the trigonometric polynomials that occur.
fn brute_cut_norm(cand: &Candidate, profile: &RadialProfile) -> f64 {
    let a = cut_radius(profile).unwrap();
    let spec = QuadratureSpec::with_rel_tol(1e-10);
    let radial = |r: f64| {
        let fr = profile.f(r);
        if fr >= 1.0 {
            return 0.0;
        }
        let ring: f64 = (0..8)
            .map(|k| {
                let zeta = Complex64::from_polar(r, 2.0 * PI * f64::from(k) / 8.0);
                let slab = |v: f64| {
                    let half = (1.0 - v * v).max(0.0).sqrt();
                    integrate(|u| cand.eval(zeta, c(u, v)).unwrap().norm_sqr(), -half, half, &spec).value
                };
                integrate(slab, fr, 1.0, &spec).value
            })
            .sum::<f64>()
            / 8.0;
        2.0 * PI * r * ring
    };
    let mut pts = [0.0, profile.f_inverse(cand.t()).unwrap(), a];
    pts.sort_by(f64::total_cmp);
    pts.windows(2).map(|w| integrate(radial, w[0], w[1], &spec).value).sum()
}

#[test]
fn cut_norms_match_brute_force() {
    let f = RadialProfile::exp_inverse(1.0).unwrap();
    let t = 0.05;
    let cands = [
        Candidate::PhiKernel { t },
        Candidate::Psi {
            alpha: 1.0,
            beta: 2.0,
            n: 1,
            t,
            z: c(0.1, 0.0),
        },
        Candidate::PhiAlt { n: 1, t },
        Candidate::PhiMetric2 { t, xi2: c(0.6, 0.8) },
        Candidate::PhiMetric1 {
            z: c(0.05, 0.02),
            t,
            xi1: c(1.0, 0.0),
        },
    ];
    for cand in cands {
        let got = candidate_norm_sq(&cand, &f, DomainTag::BidiscCut, &default_norm_spec()).unwrap();
        let want = brute_cut_norm(&cand, &f);
        assert!(rel(got.norm_sq, want) < 1e-6, "{cand:?}: {} vs {want}", got.norm_sq);
    }
}

#[test]
fn monte_carlo_agrees_with_slicing() {
    let f = RadialProfile::exp_inverse(1.0).unwrap();
    let k = SlicingKernel::new(f.clone(), SlicingConfig::default());
    let reference = k.kernel_diag(0.3, 0.5).unwrap().value;
    for theta in [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0] {
        let z = Complex64::from_polar(0.3, theta);
        let mc = monte_carlo_kernel(&f, z, 0.5, &MonteCarloConfig::default()).unwrap();
        assert!(rel(mc, reference) < 0.05, "angle {theta}: {mc} vs {reference}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // a subdomain has a larger kernel
    #[test]
    fn inscribed_bidisc_bounds_the_kernel(u in 0.0f64..1.0, theta in 0.0f64..0.9) {
        let f = RadialProfile::exp_inverse(1.0).unwrap();
        let cert = find_sigma(&f.lambda(), 0.4, 1e6).unwrap().into_certificate().unwrap();
        let region = ApproachRegion::new(1.0, 2).unwrap();
        let t = 10f64.powf(-6.0 + 4.0 * u);
        let z = c(theta * region.radius(t), 0.0);
        let b = InscribedBidisc::construct(&f, cert.c(), z, t).unwrap();
        let k = SlicingKernel::new(f, SlicingConfig::default()).kernel_diag(z.re, t).unwrap();
        prop_assert!(b.kernel_at_center() >= k.value - k.error);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metric_competitors_split_pointwise(
        r in 0.0f64..0.5, phase in 0.0f64..6.3, u in -2.0f64..2.0, h in 1e-8f64..2.0,
        lt in -8.0f64..0.0, zr in 0.0f64..0.3, xr in 0.1f64..3.0, xphase in 0.0f64..6.3,
    ) {
        let f = RadialProfile::exp_inverse(1.0).unwrap();
        let zeta = Complex64::from_polar(r, phase);
        let w = c(u, f.f(r) + h);
        let t = 10f64.powf(lt);
        let z = c(zr, 0.0);
        let xi = Complex64::from_polar(xr, xphase);
        let slack = 1.0 + 1e-12;

        let lhs = Candidate::PhiMetric2 { t, xi2: xi }.eval(zeta, w).unwrap().norm_sqr();
        let a1 = Candidate::PhiAlt { n: 1, t }.eval(zeta, w).unwrap().norm_sqr();
        let a0 = Candidate::PhiAlt { n: 0, t }.eval(zeta, w).unwrap().norm_sqr();
        let rhs = 128.0 / xi.norm_sqr() * (a1 + t * t * a0);
        prop_assert!(lhs <= rhs * slack);

        let lhs = Candidate::PhiMetric1 { z, t, xi1: xi }.eval(zeta, w).unwrap().norm_sqr();
        let p1 = Candidate::Psi { alpha: 0.0, beta: 2.0, n: 1, t, z: c(1.0, 0.0) }.eval(zeta, w).unwrap().norm_sqr();
        let p0 = Candidate::Psi { alpha: 1.0, beta: 2.0, n: 0, t, z }.eval(zeta, w).unwrap().norm_sqr();
        let rhs = 32.0 / xi.norm_sqr() * (p1 + p0);
        prop_assert!(lhs <= rhs * slack);
    }
}

#[test]
fn metric_lower_certificate_under_measured() {
    let f = RadialProfile::exp_inverse(1.0).unwrap();
    let k = SlicingKernel::new(f.clone(), SlicingConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut unit = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let dirs: Vec<(Complex64, Complex64)> = (0..8).map(|_| (unit(), unit())).collect();
    for &t in &[1e-5, 1e-3] {
        let kv = k.kernel_diag(0.0, t).unwrap();
        let form = metric_reference(&k, 0.0, t).unwrap();
        for &xi in &dirs {
            let lower =
                metric_lower_certificate(&f, c(0.0, 0.0), t, xi, kv.value + kv.error, DomainTag::FullDomain).unwrap();
            let measured = metric_eval(&form, xi);
            assert!(
                lower.lower_bound <= measured * (1.0 + 1e-6),
                "t={t} xi={xi:?}: {} > {measured}",
                lower.lower_bound
            );
        }
    }
}
