//! Explicit competitors in the extremal problems for `K` and `J`, and their
//! squared `L^2` norms over `Omega_F` or over `Omega_F` cut by
//! `D(0, a) x D(0, 1)`.

use crate::doubling::DoublingCertificate;
use crate::error::{LabError, Result};
use crate::kernel::DomainPoint;
use crate::profile::{log_grid, RadialProfile};
use crate::quadrature::{integrate, integrate_breakpoints, IntegralResult, QuadratureSpec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const ADMISSIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Candidate {
    /// `|z|^alpha t^beta zeta^n / (w + it)^2`
    Psi {
        alpha: f64,
        beta: f64,
        n: u32,
        t: f64,
        z: Complex64,
    },
    /// `-4 t^2 / (w + it)^2`
    PhiKernel { t: f64 },
    /// `t^3 w^n / (w + it)^3`
    PhiAlt { n: u32, t: f64 },
    /// `-8i t^3 (w - it) / (xi2 (w + it)^3)`
    PhiMetric2 { t: f64, xi2: Complex64 },
    /// `-4 (zeta - z) t^2 / (xi1 (w + it)^2)`
    PhiMetric1 { z: Complex64, t: f64, xi1: Complex64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    FullDomain,
    BidiscCut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEstimate {
    pub norm_sq: f64,
    pub error: f64,
    pub domain_tag: DomainTag,
}

fn i() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

impl Candidate {
    pub fn t(&self) -> f64 {
        match *self {
            Candidate::Psi { t, .. }
            | Candidate::PhiKernel { t }
            | Candidate::PhiAlt { t, .. }
            | Candidate::PhiMetric2 { t, .. }
            | Candidate::PhiMetric1 { t, .. } => t,
        }
    }

    fn validate(&self) -> Result<()> {
        let t = self.t();
        if !(t > 0.0) || !t.is_finite() {
            return Err(LabError::domain("candidate height t must be positive", t, 0.0));
        }
        match *self {
            Candidate::Psi { alpha, beta, n, .. } => {
                if !(alpha >= 0.0) {
                    return Err(LabError::domain("alpha must be nonnegative", alpha, 0.0));
                }
                if !(beta > 1.0) {
                    return Err(LabError::domain("beta must exceed 1", beta, 1.0));
                }
                if n > 1 {
                    return Err(LabError::domain("n must be 0 or 1", f64::from(n), 1.0));
                }
            }
            Candidate::PhiAlt { n, .. } if n > 1 => {
                return Err(LabError::domain("n must be 0 or 1", f64::from(n), 1.0));
            }
            Candidate::PhiMetric2 { xi2, .. } if xi2.norm() == 0.0 => {
                return Err(LabError::domain("xi2 must be nonzero", 0.0, 0.0));
            }
            Candidate::PhiMetric1 { xi1, .. } if xi1.norm() == 0.0 => {
                return Err(LabError::domain("xi1 must be nonzero", 0.0, 0.0));
            }
            _ => {}
        }
        Ok(())
    }

    fn pole_check(&self, w: Complex64) -> Result<Complex64> {
        let d = w + i() * self.t();
        if d.norm() == 0.0 {
            return Err(LabError::domain(
                "candidate evaluated at its pole w = -it",
                w.im,
                -self.t(),
            ));
        }
        Ok(d)
    }

    pub fn eval(&self, zeta: Complex64, w: Complex64) -> Result<Complex64> {
        self.validate()?;
        let d = self.pole_check(w)?;
        Ok(match *self {
            Candidate::Psi { alpha, beta, n, t, z } => z.norm().powf(alpha) * t.powf(beta) * zeta.powu(n) / (d * d),
            Candidate::PhiKernel { t } => -4.0 * t * t / (d * d),
            Candidate::PhiAlt { n, t } => t.powi(3) * w.powu(n) / d.powu(3),
            Candidate::PhiMetric2 { t, xi2 } => -8.0 * i() * t.powi(3) * (w - i() * t) / (xi2 * d.powu(3)),
            Candidate::PhiMetric1 { z, t, xi1 } => -4.0 * (zeta - z) * t * t / (xi1 * d * d),
        })
    }

    /// `(d/dzeta, d/dw)` at `(zeta, w)`.
    pub fn gradient(&self, zeta: Complex64, w: Complex64) -> Result<(Complex64, Complex64)> {
        self.validate()?;
        let d = self.pole_check(w)?;
        let zero = Complex64::new(0.0, 0.0);
        Ok(match *self {
            Candidate::Psi { alpha, beta, n, t, z } => {
                let a = z.norm().powf(alpha) * t.powf(beta);
                let dz = if n == 0 {
                    zero
                } else {
                    a * f64::from(n) * zeta.powu(n - 1) / (d * d)
                };
                (dz, -2.0 * a * zeta.powu(n) / d.powu(3))
            }
            Candidate::PhiKernel { t } => (zero, 8.0 * t * t / d.powu(3)),
            Candidate::PhiAlt { n, t } => {
                let lead = if n == 0 {
                    zero
                } else {
                    f64::from(n) * w.powu(n - 1) / d.powu(3)
                };
                (zero, t.powi(3) * (lead - 3.0 * w.powu(n) / d.powu(4)))
            }
            Candidate::PhiMetric2 { t, xi2 } => {
                let c = -8.0 * i() * t.powi(3) / xi2;
                (zero, c * (1.0 / d.powu(3) - 3.0 * (w - i() * t) / d.powu(4)))
            }
            Candidate::PhiMetric1 { z, t, xi1 } => (
                -4.0 * t * t / (xi1 * d * d),
                8.0 * (zeta - z) * t * t / (xi1 * d.powu(3)),
            ),
        })
    }
}

pub fn candidate_eval(c: &Candidate, zeta: Complex64, w: Complex64) -> Result<Complex64> {
    c.eval(zeta, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    pub value_at_center: Complex64,
    pub pairing: Complex64,
    /// Vanishes at the center with unit pairing: a competitor for `J`.
    pub j_class: bool,
    /// Equals 1 at the center: a competitor for `K`.
    pub k_class: bool,
}

pub fn admissibility_check(c: &Candidate, z: Complex64, t: f64, xi: (Complex64, Complex64)) -> Result<Admissibility> {
    let w = Complex64::new(0.0, t);
    let value = c.eval(z, w)?;
    let (dz, dw) = c.gradient(z, w)?;
    let pairing = dz * xi.0 + dw * xi.1;
    Ok(Admissibility {
        value_at_center: value,
        pairing,
        j_class: value.norm() <= ADMISSIBILITY_TOL && (pairing - 1.0).norm() <= ADMISSIBILITY_TOL,
        k_class: (value - 1.0).norm() <= ADMISSIBILITY_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReducedKind {
    /// `r^{2n+1} / (t + f)^2`
    Psi { n: u32 },
    /// `r / (t + f)^{4 - 2n}`
    Alt { n: u32 },
}

impl ReducedKind {
    fn exponents(self) -> (i32, i32) {
        match self {
            ReducedKind::Psi { n } => (2 * n as i32 + 1, 2),
            ReducedKind::Alt { n } => (1, 4 - 2 * n as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedIntegral {
    pub total: IntegralResult,
    /// `f^{-1}(t)`
    pub r_t: f64,
    /// `f^{-1}(sqrt t)`
    pub r_sqrt_t: f64,
    /// Over `[0, R_t]`, `[R_t, R_sqrt_t]`, `[R_sqrt_t, a]` (clamped to `[0, a]`).
    pub pieces: [IntegralResult; 3],
}

/// `int_0^a r^p / (t + f(r))^q dr`, together with its three-way split.
pub fn reduced_integral(
    profile: &RadialProfile,
    kind: ReducedKind,
    t: f64,
    a: f64,
    spec: &QuadratureSpec,
) -> Result<ReducedIntegral> {
    if !(t > 0.0) || !(a > 0.0) {
        return Err(LabError::domain(
            "reduced integral needs t > 0 and a > 0",
            t.min(a),
            0.0,
        ));
    }
    let (p, q) = kind.exponents();
    let integrand = |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        (f64::from(p) * r.ln() - f64::from(q) * (t + profile.f(r)).ln()).exp()
    };
    let r_t = profile.f_inverse(t)?;
    let r_sqrt_t = profile.f_inverse(t.sqrt())?;
    let b1 = r_t.min(a);
    let b2 = r_sqrt_t.min(a).max(b1);
    let pieces = [
        integrate(integrand, 0.0, b1, spec),
        integrate(integrand, b1, b2, spec),
        integrate(integrand, b2, a, spec),
    ];
    let total = integrate_breakpoints(integrand, &[0.0, b1, b2, a], spec);
    for r in pieces.iter().chain(std::iter::once(&total)) {
        if !r.converged && r.rel_error() > 1e-6 {
            return Err(LabError::Quadrature {
                context: format!("reduced integral {kind:?} at t = {t}"),
                value: r.value,
                error: r.error_estimate,
            });
        }
    }
    Ok(ReducedIntegral {
        total,
        r_t,
        r_sqrt_t,
        pieces,
    })
}

/// `a = min{f^{-1}(1), 1}`.
pub fn cut_radius(profile: &RadialProfile) -> Result<f64> {
    Ok(profile.f_inverse(1.0)?.min(1.0))
}

/// Terms `(p, q)` of `r^p / (t + f)^q` making up the full-domain radial
/// integrand, for the integrability check.
fn full_domain_terms(c: &Candidate) -> Vec<(i32, i32)> {
    match *c {
        Candidate::Psi { n, .. } => vec![(2 * n as i32 + 1, 2)],
        Candidate::PhiKernel { .. } => vec![(1, 2)],
        Candidate::PhiAlt { n: 0, .. } => vec![(1, 4)],
        Candidate::PhiAlt { .. } | Candidate::PhiMetric2 { .. } => vec![(1, 2), (1, 3), (1, 4)],
        Candidate::PhiMetric1 { .. } => vec![(3, 2), (1, 2)],
    }
}

/// Closed form of `int_{v > f(r)} int_R |phi|^2 du dv` with `S = f(r) + t`,
/// times `2 pi r` and averaged over the circle `|zeta| = r`.
fn full_domain_radial(c: &Candidate, r: f64, s: f64) -> f64 {
    let base = PI / (4.0 * s * s);
    let ring = 2.0 * PI * r;
    match *c {
        Candidate::Psi { alpha, beta, n, t, z } => {
            ring * z.norm().powf(2.0 * alpha) * t.powf(2.0 * beta) * r.powi(2 * n as i32) * base
        }
        Candidate::PhiKernel { t } => ring * 16.0 * t.powi(4) * base,
        Candidate::PhiAlt { n: 0, t } => ring * t.powi(6) * 3.0 * PI / (32.0 * s.powi(4)),
        Candidate::PhiAlt { t, .. } => {
            ring * t.powi(6) * (base - PI * t / (4.0 * s.powi(3)) + 3.0 * PI * t * t / (32.0 * s.powi(4)))
        }
        Candidate::PhiMetric2 { t, xi2 } => {
            ring * 64.0 * t.powi(6) / xi2.norm_sqr()
                * (base - PI * t / (2.0 * s.powi(3)) + 3.0 * PI * t * t / (8.0 * s.powi(4)))
        }
        Candidate::PhiMetric1 { z, t, xi1 } => ring * 16.0 * t.powi(4) / xi1.norm_sqr() * (r * r + z.norm_sqr()) * base,
    }
}

/// `int_{-U}^{U} du / (u^2 + s^2)^2`
fn j2(s: f64, big_u: f64) -> f64 {
    let s2 = s * s;
    big_u / (s2 * (big_u * big_u + s2)) + (big_u / s).atan() / (s2 * s)
}

/// `int_{-U}^{U} du / (u^2 + s^2)^3`
fn j3(s: f64, big_u: f64) -> f64 {
    let s2 = s * s;
    let q = big_u * big_u + s2;
    2.0 * (big_u / (4.0 * s2 * q * q)
        + 3.0 * big_u / (8.0 * s2 * s2 * q)
        + 3.0 * (big_u / s).atan() / (8.0 * s2 * s2 * s))
}

/// `int_{-U}^{U} |phi|^2 du` at height `v`, without the `zeta`-dependent factor.
fn cut_inner(c: &Candidate, v: f64) -> f64 {
    let t = c.t();
    let s = v + t;
    let big_u = (1.0 - v * v).max(0.0).sqrt();
    match *c {
        Candidate::Psi { .. } | Candidate::PhiKernel { .. } | Candidate::PhiMetric1 { .. } => j2(s, big_u),
        Candidate::PhiAlt { n: 0, .. } => j3(s, big_u),
        Candidate::PhiAlt { .. } => {
            let a3 = j3(s, big_u);
            j2(s, big_u) - s * s * a3 + v * v * a3
        }
        Candidate::PhiMetric2 { .. } => {
            let a3 = j3(s, big_u);
            j2(s, big_u) - s * s * a3 + (v - t).powi(2) * a3
        }
    }
}

/// Circle average of the `zeta`-dependent factor of `|phi|^2`, times `2 pi r`,
/// without the constant factor `cut_scale`.
fn cut_ring(c: &Candidate, r: f64) -> f64 {
    let ring = 2.0 * PI * r;
    match *c {
        Candidate::Psi { n, .. } => ring * r.powi(2 * n as i32),
        Candidate::PhiKernel { .. } | Candidate::PhiAlt { .. } | Candidate::PhiMetric2 { .. } => ring,
        Candidate::PhiMetric1 { z, .. } => ring * (r * r + z.norm_sqr()),
    }
}

/// Log of the constant factor of `|phi|^2`, applied after integration so
/// small `t` cannot underflow.
fn cut_log_scale(c: &Candidate) -> f64 {
    match *c {
        Candidate::Psi { alpha, beta, z, t, .. } => {
            let zpart = if alpha == 0.0 { 0.0 } else { 2.0 * alpha * z.norm().ln() };
            zpart + 2.0 * beta * t.ln()
        }
        Candidate::PhiKernel { t } => 16f64.ln() + 4.0 * t.ln(),
        Candidate::PhiAlt { t, .. } => 6.0 * t.ln(),
        Candidate::PhiMetric2 { t, xi2 } => 64f64.ln() + 6.0 * t.ln() - xi2.norm_sqr().ln(),
        Candidate::PhiMetric1 { t, xi1, .. } => 16f64.ln() + 4.0 * t.ln() - xi1.norm_sqr().ln(),
    }
}

fn radial_breakpoints(profile: &RadialProfile, t: f64, top: f64) -> Result<Vec<f64>> {
    let mut pts = vec![0.0, profile.f_inverse(t)?, profile.f_inverse(t.sqrt())?];
    if let Some(c) = profile.cutoff() {
        pts.push(c);
    }
    pts.push(1.0);
    pts.retain(|&x| x < top);
    pts.push(top);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    Ok(pts)
}

pub fn candidate_norm_sq(
    c: &Candidate,
    profile: &RadialProfile,
    tag: DomainTag,
    spec: &QuadratureSpec,
) -> Result<NormEstimate> {
    c.validate()?;
    let t = c.t();
    let res = match tag {
        DomainTag::FullDomain => {
            let g = profile.growth_exponent();
            for (p, q) in full_domain_terms(c) {
                if !(f64::from(p) - f64::from(q) * g < -1.0) {
                    return Err(LabError::Divergent(format!(
                        "full-domain norm of {c:?}: r^{p}/f^{q} is not integrable when f grows like r^{g}"
                    )));
                }
            }
            let pts = radial_breakpoints(profile, t, f64::INFINITY)?;
            integrate_breakpoints(|r| full_domain_radial(c, r, profile.f(r) + t), &pts, spec)
        }
        DomainTag::BidiscCut => {
            let a = cut_radius(profile)?;
            let inner_spec = QuadratureSpec {
                rel_tol: 0.1 * spec.rel_tol,
                ..*spec
            };
            let pts = radial_breakpoints(profile, t, a)?;
            let log_scale = cut_log_scale(c);
            let mut res = integrate_breakpoints(
                |r| {
                    let fr = profile.f(r);
                    if fr >= 1.0 {
                        return 0.0;
                    }
                    // v = e^x - t puts the s^{-3}-type peak at v = f(r) on an even footing
                    let lo = (fr + t).ln();
                    let hi = (1.0 + t).ln();
                    let inner = integrate(|x| cut_inner(c, x.exp() - t) * x.exp(), lo, hi, &inner_spec);
                    cut_ring(c, r) * inner.value
                },
                &pts,
                spec,
            );
            res.value = (res.value.ln() + log_scale).exp();
            res.error_estimate = (res.error_estimate.ln() + log_scale).exp();
            res
        }
    };
    if !(res.value > 0.0) || (!res.converged && res.rel_error() > 1e-6) {
        return Err(LabError::Quadrature {
            context: format!("norm of {c:?} ({tag:?})"),
            value: res.value,
            error: res.error_estimate,
        });
    }
    Ok(NormEstimate {
        norm_sq: res.value,
        error: res.error_estimate,
        domain_tag: tag,
    })
}

pub fn default_norm_spec() -> QuadratureSpec {
    QuadratureSpec {
        rel_tol: 1e-9,
        abs_tol: 0.0,
        max_subdivisions: 2000,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerCertificate {
    pub lower_bound: f64,
    pub error: f64,
}

/// `|phi_t(z, it)|^2 / ||phi_t||^2`, a lower bound for the kernel of the
/// tagged domain at `(z, it)`.
pub fn kernel_lower_certificate(
    profile: &RadialProfile,
    z: Complex64,
    t: f64,
    tag: DomainTag,
) -> Result<LowerCertificate> {
    let w = Complex64::new(0.0, t);
    DomainPoint::new(profile, z, w)?;
    let c = Candidate::PhiKernel { t };
    let value = c.eval(z, w)?.norm_sqr();
    let norm = candidate_norm_sq(&c, profile, tag, &default_norm_spec())?;
    let lower_bound = value / norm.norm_sq;
    Ok(LowerCertificate {
        lower_bound,
        error: lower_bound * norm.error / norm.norm_sq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JUpperBound {
    pub j_ub: f64,
    pub error: f64,
    pub case: u8,
}

/// Upper bound for `J(z, it; xi)` from the explicit competitors: case 1 uses
/// `xi2`, case 2 uses `xi1`; with both nonzero the smaller bound wins.
pub fn j_upper_bound(
    profile: &RadialProfile,
    z: Complex64,
    t: f64,
    xi: (Complex64, Complex64),
    tag: DomainTag,
) -> Result<JUpperBound> {
    DomainPoint::new(profile, z, Complex64::new(0.0, t))?;
    let mut best: Option<JUpperBound> = None;
    let cases = [
        (1u8, xi.1.norm() > 0.0, Candidate::PhiMetric2 { t, xi2: xi.1 }),
        (2u8, xi.0.norm() > 0.0, Candidate::PhiMetric1 { z, t, xi1: xi.0 }),
    ];
    for (case, active, c) in cases {
        if !active {
            continue;
        }
        let adm = admissibility_check(&c, z, t, xi)?;
        if !adm.j_class {
            return Err(LabError::Numerical(format!(
                "competitor {c:?} is not admissible: value {}, pairing {}",
                adm.value_at_center, adm.pairing
            )));
        }
        let n = candidate_norm_sq(&c, profile, tag, &default_norm_spec())?;
        if best.is_none_or(|b| n.norm_sq < b.j_ub) {
            best = Some(JUpperBound {
                j_ub: n.norm_sq,
                error: n.error,
                case,
            });
        }
    }
    best.ok_or_else(|| LabError::domain("direction xi must be nonzero", 0.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct R0Report {
    pub r0: f64,
    /// `f(a)^2`
    pub f_a_sq: f64,
    /// `e^{-1/T}`
    pub rho_doubling: f64,
    /// Largest `c` with `R_t^{2n+2} >= t^{1/2}` on `(0, c)` for `n = 0, 1`.
    pub c_star: f64,
}

/// `r_0 = min{f(a)^2, e^{-1/T}, c}`.
pub fn r0(profile: &RadialProfile, cert: &DoublingCertificate) -> Result<R0Report> {
    let a = cut_radius(profile)?;
    let f_a_sq = profile.f(a).powi(2);
    let rho_doubling = (-1.0 / cert.t).exp();
    // n = 1 is binding since R_t < 1
    let holds = |t: f64| -> Result<bool> { Ok(4.0 * profile.f_inverse(t)?.ln() >= 0.5 * t.ln()) };
    let cap = f_a_sq.min(rho_doubling).min(0.999);
    let grid = log_grid(1e-300, cap, 3000);
    let mut c_star = cap;
    let mut prev: Option<f64> = None;
    for &t in &grid {
        if !holds(t)? {
            c_star = match prev {
                None => 0.0,
                Some(mut lo) => {
                    let mut hi = t;
                    for _ in 0..200 {
                        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if holds(mid)? {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    lo
                }
            };
            break;
        }
        prev = Some(t);
    }
    Ok(R0Report {
        r0: f_a_sq.min(rho_doubling).min(c_star),
        f_a_sq,
        rho_doubling,
        c_star,
    })
}
