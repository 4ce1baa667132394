//! Doubling certificates `2 Lambda_f(x) <= Lambda_f(sigma x)` on `[0, R/sigma]`.

use crate::error::{LabError, Result};
use crate::profile::{log_grid, LambdaView};
use serde::{Deserialize, Serialize};

/// Ratio of the sigma search ladder.
pub const LADDER_RATIO: f64 = 1.05;
pub const DEFAULT_GRID: usize = 10_000;
pub const DEFAULT_SIGMA_MAX: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingCertificate {
    pub sigma: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub cprime: f64,
    pub min_margin: f64,
    pub grid_size: usize,
}

impl DoublingCertificate {
    /// The bidisc shrink factor `c = 1/sigma`.
    pub fn c(&self) -> f64 {
        1.0 / self.sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingWitness {
    pub sigma: f64,
    pub x: f64,
    /// `2 Lambda(x)`
    pub lhs: f64,
    /// `Lambda(sigma x)`
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotDoublingEvidence {
    #[serde(rename = "R")]
    pub r: f64,
    pub sigma_max: f64,
    pub witnesses: Vec<DoublingWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DoublingOutcome {
    Certified(DoublingCertificate),
    NotDoubling(NotDoublingEvidence),
}

impl DoublingOutcome {
    pub fn certificate(&self) -> Option<&DoublingCertificate> {
        match self {
            DoublingOutcome::Certified(c) => Some(c),
            DoublingOutcome::NotDoubling(_) => None,
        }
    }

    pub fn into_certificate(self) -> Result<DoublingCertificate> {
        match self {
            DoublingOutcome::Certified(c) => Ok(c),
            DoublingOutcome::NotDoubling(e) => Err(LabError::NotDoubling { sigma_max: e.sigma_max }),
        }
    }
}

/// Grid on `[0, top]`: half log-spaced down to 1e-300, half linear, plus 0.
pub fn doubling_grid(top: f64, n: usize) -> Vec<f64> {
    let half = (n / 2).max(2);
    let mut xs = log_grid(1e-300_f64.max(top * 1e-300), top, half);
    xs.extend((1..=n - half).map(|i| top * i as f64 / (n - half) as f64));
    xs.push(0.0);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Minimum of `g(sigma x) - 2 g(x)` over the grid, with the worst point.
/// The comparison runs on logs, so points where `g` is subnormal or
/// underflows are decided correctly; the margin is reported as
/// `2 g(x) expm1(log g(sigma x) - log 2 g(x))`, which has the same sign.
fn scan<G, L>(g: &G, log_g: &L, sigma: f64, top: f64, n: usize) -> (f64, DoublingWitness)
where
    G: Fn(f64) -> f64,
    L: Fn(f64) -> f64,
{
    let mut worst = (
        f64::INFINITY,
        DoublingWitness {
            sigma,
            x: 0.0,
            lhs: 0.0,
            rhs: 0.0,
        },
    );
    for x in doubling_grid(top, n) {
        let log_lhs = std::f64::consts::LN_2 + log_g(x);
        let log_rhs = log_g(sigma * x);
        let margin = if log_lhs == f64::NEG_INFINITY {
            0.0
        } else {
            2.0 * g(x) * (log_rhs - log_lhs).exp_m1()
        };
        let margin = if margin == 0.0 && log_rhs < log_lhs {
            -f64::MIN_POSITIVE
        } else {
            margin
        };
        if margin < worst.0 {
            worst = (
                margin,
                DoublingWitness {
                    sigma,
                    x,
                    lhs: 2.0 * g(x),
                    rhs: g(sigma * x),
                },
            );
        }
    }
    worst
}

fn ladder(sigma_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut s = LADDER_RATIO;
    while s < sigma_max {
        out.push(s);
        s *= LADDER_RATIO;
    }
    out.push(sigma_max);
    out
}

/// Ladder search for an increasing `g` with `g(0) = 0`, defined on `[0, r]`.
fn search<G, L>(g: G, log_g: L, r: f64, sigma_max: f64, n: usize) -> DoublingOutcome
where
    G: Fn(f64) -> f64,
    L: Fn(f64) -> f64,
{
    let mut witnesses = Vec::new();
    for sigma in ladder(sigma_max) {
        let top = r / sigma;
        let (min_margin, witness) = scan(&g, &log_g, sigma, top, n);
        if min_margin >= 0.0 {
            return DoublingOutcome::Certified(DoublingCertificate {
                sigma,
                r,
                t: g(top),
                cprime: sigma - 1.0,
                min_margin,
                grid_size: n,
            });
        }
        witnesses.push(witness);
    }
    DoublingOutcome::NotDoubling(NotDoublingEvidence {
        r,
        sigma_max,
        witnesses,
    })
}

/// Smallest ladder sigma whose doubling inequality holds on a grid of
/// `[0, R/sigma]`, or a failing witness for every rung.
pub fn find_sigma(view: &LambdaView<'_>, r: f64, sigma_max: f64) -> Result<DoublingOutcome> {
    find_sigma_with_grid(view, r, sigma_max, DEFAULT_GRID)
}

pub fn find_sigma_with_grid(view: &LambdaView<'_>, r: f64, sigma_max: f64, grid: usize) -> Result<DoublingOutcome> {
    if !(r > 0.0) || r >= view.validity_bound() {
        return Err(LabError::domain("R must lie in (0, f^-1(1))", r, view.validity_bound()));
    }
    if !(sigma_max > 1.0) {
        return Err(LabError::domain("sigma_max must exceed 1", sigma_max, 1.0));
    }
    Ok(search(
        |x| view.lambda_unchecked(x),
        |x| view.log_lambda_unchecked(x),
        r,
        sigma_max,
        grid,
    ))
}

/// Re-check a certificate on a (usually finer) grid; returns the minimum margin.
pub fn verify_certificate(view: &LambdaView<'_>, cert: &DoublingCertificate, grid: usize) -> f64 {
    scan(
        &|x| view.lambda_unchecked(x),
        &|x| view.log_lambda_unchecked(x),
        cert.sigma,
        cert.r / cert.sigma,
        grid,
    )
    .0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffOfSquares {
    pub n: u32,
    pub max_ratio: f64,
    pub bound: f64,
    pub pass: bool,
    /// `max G(2t)/G(t)`, which should not exceed sigma.
    pub max_first_power: f64,
}

/// Max over `t in (0, T]` of `(G(2t)^{2n} - G(t)^{2n}) / G(t)^{2n}` against
/// `sigma^{2n} - 1`.
pub fn diff_of_squares_check(view: &LambdaView<'_>, cert: &DoublingCertificate, n: u32) -> Result<DiffOfSquares> {
    if !(n == 1 || n == 2) {
        return Err(LabError::domain(
            "difference-of-squares power must be 1 or 2",
            f64::from(n),
            2.0,
        ));
    }
    let mut max_ratio: f64 = 0.0;
    let mut max_first: f64 = 0.0;
    for t in log_grid(cert.t * 1e-60, cert.t, DEFAULT_GRID) {
        let a = view.g_inverse(2.0 * t)?;
        let b = view.g_inverse(t)?;
        let q = a / b;
        max_first = max_first.max(q);
        max_ratio = max_ratio.max(q.powi(2 * n as i32) - 1.0);
    }
    let bound = cert.sigma.powi(2 * n as i32) - 1.0 + 1e-9;
    Ok(DiffOfSquares {
        n,
        max_ratio,
        bound,
        pass: max_ratio <= bound,
        max_first_power: max_first,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConvexDoubling {
    pub nu: u32,
    #[serde(rename = "N")]
    pub n: u32,
    /// Doubling constant of `chi` on `[0, R_out]`.
    pub sigma_chi: f64,
    pub sigma_out: f64,
    #[serde(rename = "R_out")]
    pub r_out: f64,
}

/// From convexity of `chi^p` on `(0, eps0)` to a doubling constant for any
/// `Lambda` with `chi/B <= Lambda <= B chi`.
pub fn doubling_from_power_convexity<C: Fn(f64) -> f64>(
    chi: C,
    eps0: f64,
    p: f64,
    b: f64,
) -> Result<PowerConvexDoubling> {
    if !(eps0 > 0.0) || !(p > 0.0) || !(b >= 1.0) {
        return Err(LabError::Precondition(format!(
            "need eps0 > 0, p > 0, B >= 1 (got {eps0}, {p}, {b})"
        )));
    }
    if chi(0.0) != 0.0 {
        return Err(LabError::Precondition(format!("chi(0) = {} is not 0", chi(0.0))));
    }
    let n = DEFAULT_GRID;
    let h = eps0 / n as f64;
    let ys: Vec<f64> = (0..=n).map(|i| chi(i as f64 * h)).collect();
    if let Some(i) = (1..=n).find(|&i| !(ys[i] > ys[i - 1])) {
        return Err(LabError::Precondition(format!(
            "chi is not increasing at x = {}",
            i as f64 * h
        )));
    }
    let pw: Vec<f64> = ys.iter().map(|y| y.powf(p)).collect();
    let scale = pw[n].abs().max(f64::MIN_POSITIVE);
    for i in 1..n {
        let d2 = pw[i - 1] - 2.0 * pw[i] + pw[i + 1];
        if d2 < -1e-12 * scale {
            return Err(LabError::Precondition(format!(
                "chi^p is not convex at ({}, {}, {})",
                (i - 1) as f64 * h,
                i as f64 * h,
                (i + 1) as f64 * h
            )));
        }
    }
    let nu = (0u32..).find(|&m| 2f64.powi(m as i32) >= p).unwrap();
    let n_pow = (1u32..).find(|&k| 2f64.powi(k as i32) >= 2.0 * b * b).unwrap();
    let r_out = eps0 / 2f64.powi(nu as i32 + 1);
    let sigma_chi = search(&chi, |x| chi(x).ln(), r_out, DEFAULT_SIGMA_MAX, DEFAULT_GRID)
        .into_certificate()?
        .sigma;
    Ok(PowerConvexDoubling {
        nu,
        n: n_pow,
        sigma_chi,
        sigma_out: sigma_chi.powi(n_pow as i32),
        r_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::RadialProfile;

    #[test]
    fn exp_inverse_certifies_near_two() {
        let f = RadialProfile::exp_inverse(1.0).unwrap();
        let out = find_sigma(&f.lambda(), 0.4, 1e6).unwrap();
        let cert = out.certificate().expect("certified");
        assert!(cert.sigma >= 2.0 && cert.sigma <= 2.0 * LADDER_RATIO);
        assert!(cert.min_margin >= 0.0);
        assert!((cert.t - 0.4 / cert.sigma).abs() <= 1e-12 * cert.t);
        assert!((cert.cprime - (cert.sigma - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn double_exp_sigma() {
        let f = RadialProfile::double_exp().unwrap();
        let cert = find_sigma(&f.lambda(), 0.4, 1e6).unwrap().into_certificate().unwrap();
        // the exact threshold is 1 + R log 2
        assert!(cert.sigma >= 1.0 + 0.4 * 2f64.ln());
        assert!(cert.sigma <= 1.0 + 0.5 * 2f64.ln());
    }

    #[test]
    fn monomial_never_doubles() {
        let f = RadialProfile::monomial(1).unwrap();
        match find_sigma(&f.lambda(), 0.4, 1e6).unwrap() {
            DoublingOutcome::NotDoubling(e) => {
                let last = e.witnesses.last().unwrap();
                assert!(last.lhs > last.rhs);
                assert!(last.x < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn r_outside_lambda_domain() {
        let f = RadialProfile::exp_inverse(1.0).unwrap();
        let v = f.lambda();
        assert!(matches!(
            find_sigma(&v, v.validity_bound(), 10.0),
            Err(LabError::Domain { .. })
        ));
    }

    #[test]
    fn diff_of_squares_exp_inverse() {
        let f = RadialProfile::exp_inverse(1.0).unwrap();
        let v = f.lambda();
        let cert = find_sigma(&v, 0.4, 1e6).unwrap().into_certificate().unwrap();
        let d = diff_of_squares_check(&v, &cert, 1).unwrap();
        // G(t) = t, so the ratio is exactly 3
        assert!((d.max_ratio - 3.0).abs() < 1e-12);
        assert!(d.pass);
        assert!(d.max_first_power <= cert.sigma);
    }

    #[test]
    fn certificate_json_keys() {
        let cert = DoublingCertificate {
            sigma: 2.0,
            r: 0.4,
            t: 0.2,
            cprime: 1.0,
            min_margin: 0.0,
            grid_size: 10,
        };
        let v: serde_json::Value = serde_json::to_value(&cert).unwrap();
        for k in ["sigma", "R", "T", "cprime", "min_margin"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }

    #[test]
    fn power_convexity_examples() {
        let a = doubling_from_power_convexity(|x| x, 0.2, 1.0, 1.0).unwrap();
        assert_eq!((a.nu, a.n), (0, 1));
        assert!((a.r_out - 0.1).abs() < 1e-15);
        let b = doubling_from_power_convexity(|x| x * x, 0.2, 0.5, 2.0).unwrap();
        assert_eq!((b.nu, b.n), (0, 3));
        assert!((b.sigma_out - b.sigma_chi.powi(3)).abs() < 1e-12);
        let c = doubling_from_power_convexity(f64::sqrt, 0.2, 2.0, 1.0).unwrap();
        assert_eq!((c.nu, c.n), (1, 1));
        assert!((c.r_out - 0.05).abs() < 1e-15);
    }

    #[test]
    fn power_convexity_rejects_concave() {
        let e = doubling_from_power_convexity(f64::sqrt, 0.2, 1.0, 1.0).unwrap_err();
        assert!(matches!(e, LabError::Precondition(ref s) if s.contains("convex")));
    }
}
