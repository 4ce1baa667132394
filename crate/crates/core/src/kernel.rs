//! Diagonal Bergman kernel of `Omega_F` by Fourier-Laplace slicing.
//!
//! Translations in `Re w` and rotations in `z` reduce `A^2(Omega_F)` to the
//! weighted spaces `A^2(C, e^{-2 tau F})`, whose orthonormal bases are the
//! normalised monomials. On the diagonal this gives
//!
//! ```text
//! K(z, u + iv) = (1/pi) int_0^inf tau S(tau) e^{-2 tau v} dtau,
//! S(tau)       = sum_k |z|^{2k} / m_k(tau),
//! m_k(tau)     = 2 pi int_0^inf r^{2k+1} e^{-2 tau f(r)} dr.
//! ```
//!
//! The tau-integral is evaluated in the variable `s = 2 tau v`.

use crate::doubling::DoublingCertificate;
use crate::error::{LabError, Result};
use crate::profile::{log_grid, Family, RadialProfile};
use crate::quadrature::{integrate_breakpoints, IntegralResult, QuadratureSpec};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Log-window kept around the peak of a moment integrand.
const LOG_WINDOW: f64 = 60.0;
/// Points in the coarse peak search of a moment integrand.
const PEAK_GRID: usize = 128;
/// `s`-range of the slice integral for `z = 0`; `e^{-150}` is negligible.
const S_MAX: f64 = 150.0;
const MAX_CACHE_ENTRIES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    Off,
    #[default]
    Memoize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlicingConfig {
    pub k_max: usize,
    pub tau_spec: QuadratureSpec,
    pub moment_spec: QuadratureSpec,
    pub cache: CachePolicy,
}

impl Default for SlicingConfig {
    fn default() -> Self {
        Self {
            k_max: 64,
            tau_spec: QuadratureSpec {
                rel_tol: 1e-10,
                abs_tol: 0.0,
                max_subdivisions: 2000,
            },
            moment_spec: QuadratureSpec {
                rel_tol: 1e-12,
                abs_tol: 0.0,
                max_subdivisions: 2000,
            },
            cache: CachePolicy::Memoize,
        }
    }
}

impl SlicingConfig {
    pub fn with_k_max(k_max: usize) -> Self {
        Self {
            k_max,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValue {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    /// Largest number of series terms used at any tau node.
    pub series_terms: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceValue {
    pub value: f64,
    pub error: f64,
}

/// `I_j^{(m)} = (1/pi) int tau (-2 tau)^m e^{-2 tau v} / m_j(tau) dtau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeSlices {
    pub i0: SliceValue,
    pub i1: SliceValue,
    pub di0_dv: SliceValue,
    pub d2i0_dv2: SliceValue,
    pub di1_dv: SliceValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DomainPoint {
    pub z: Complex64,
    pub w: Complex64,
    pub height: f64,
}

impl DomainPoint {
    pub fn new(profile: &RadialProfile, z: Complex64, w: Complex64) -> Result<Self> {
        let floor = profile.f(z.norm());
        let height = w.im - floor;
        if !(height > 0.0) {
            return Err(LabError::OutsideDomain { v: w.im, floor });
        }
        Ok(Self { z, w, height })
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Reference evaluator with a shared moment cache.
#[derive(Debug)]
pub struct SlicingKernel {
    profile: RadialProfile,
    config: SlicingConfig,
    cache: RwLock<HashMap<(usize, u64), f64>>,
}

impl Clone for SlicingKernel {
    fn clone(&self) -> Self {
        Self::new(self.profile.clone(), self.config.clone())
    }
}

impl SlicingKernel {
    pub fn new(profile: RadialProfile, config: SlicingConfig) -> Self {
        Self {
            profile,
            config,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn config(&self) -> &SlicingConfig {
        &self.config
    }

    /// `log m_k(tau)`.
    pub fn log_moment(&self, k: usize, tau: f64) -> Result<f64> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(LabError::domain("moment parameter tau must be positive", tau, 0.0));
        }
        let key = (k, tau.to_bits());
        if self.config.cache == CachePolicy::Memoize {
            if let Some(&v) = self.cache.read().get(&key) {
                return Ok(v);
            }
        }
        let v = self.log_moment_uncached(k, tau)?;
        if self.config.cache == CachePolicy::Memoize {
            let mut c = self.cache.write();
            if c.len() >= MAX_CACHE_ENTRIES {
                c.clear();
            }
            c.insert(key, v);
        }
        Ok(v)
    }

    pub fn moment(&self, k: usize, tau: f64) -> Result<f64> {
        self.log_moment(k, tau).map(f64::exp)
    }

    fn log_moment_uncached(&self, k: usize, tau: f64) -> Result<f64> {
        match (self.profile.family(), self.profile.cutoff()) {
            // 2 pi int r^{2k+1} e^{-2 tau r^{2M}} dr
            (Family::Monomial { m }, None) => {
                let m = f64::from(*m);
                let s = (k as f64 + 1.0) / m;
                Ok((PI / m).ln() + libm::lgamma(s) - s * (2.0 * tau).ln())
            }
            _ => self.log_moment_quadrature(k, tau),
        }
    }

    fn log_moment_quadrature(&self, k: usize, tau: f64) -> Result<f64> {
        let a = (2 * k + 1) as f64;
        let f = &self.profile;
        let g = |r: f64| a * r.ln() - 2.0 * tau * f.f(r);

        // g is unimodal (r f' is nondecreasing for subharmonic F): bracket
        // the peak from above, then search a log grid below.
        let mut hi = 1.0;
        while g(2.0 * hi) > g(hi) {
            hi *= 2.0;
            if hi > 1e150 {
                return Err(LabError::Divergent(format!(
                    "moment k={k}, tau={tau}: profile grows too slowly"
                )));
            }
        }
        hi *= 2.0;
        let mut lo = hi * 1e-14;
        let (grid, vals, imax) = loop {
            let grid = log_grid(lo, hi, PEAK_GRID);
            let vals: Vec<f64> = grid.iter().map(|&r| g(r)).collect();
            let imax = vals
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1))
                .map(|(i, _)| i)
                .unwrap();
            if imax == 0 && lo > 1e-290 {
                hi = grid[1];
                lo *= 1e-14;
                continue;
            }
            break (grid, vals, imax);
        };
        let gmax = vals[imax];
        if !gmax.is_finite() {
            return Err(LabError::Numerical(format!(
                "moment k={k}, tau={tau}: non-finite integrand peak"
            )));
        }
        let first = vals.iter().position(|&x| x >= gmax - LOG_WINDOW).unwrap();
        let last = vals.iter().rposition(|&x| x >= gmax - LOG_WINDOW).unwrap();
        let r_lo = if first == 0 { 0.0 } else { grid[first - 1] };
        let mut r_hi = if last + 1 < grid.len() {
            grid[last + 1]
        } else {
            grid[last]
        };
        while g(r_hi) > gmax - LOG_WINDOW {
            r_hi *= 1.5;
        }
        let mut points = vec![r_lo, grid[imax], r_hi];
        points.dedup();
        let res = integrate_breakpoints(|r| (g(r) - gmax).exp(), &points, &self.config.moment_spec);
        if !(res.value > 0.0) || (!res.converged && res.rel_error() > 1e-8) {
            return Err(LabError::Quadrature {
                context: format!("moment k={k}, tau={tau}"),
                value: res.value,
                error: res.error_estimate,
            });
        }
        Ok((2.0 * PI).ln() + gmax + res.value.ln())
    }

    /// `log S(tau)` with its relative tail bound and term count.
    fn log_series(&self, log_z2: f64, tau: f64) -> Result<(f64, f64, usize, bool)> {
        let l0 = -self.log_moment(0, tau)?;
        if log_z2 == f64::NEG_INFINITY {
            return Ok((l0, 0.0, 1, true));
        }
        let target = (0.1 * self.config.tau_spec.rel_tol).ln();
        let mut acc = l0;
        let mut prev = l0;
        for k in 1..=self.config.k_max {
            let lk = k as f64 * log_z2 - self.log_moment(k, tau)?;
            acc = log_add_exp(acc, lk);
            let lq = lk - prev;
            // term ratios are nonincreasing (log-convex moments), so the
            // remainder is dominated by a geometric series
            if lq < 0.0 {
                let log_tail = lk + lq - (-lq.exp()).ln_1p();
                if log_tail - acc <= target {
                    return Ok((acc, (log_tail - acc).exp(), k + 1, true));
                }
            }
            prev = lk;
        }
        Ok((acc, f64::INFINITY, self.config.k_max + 1, false))
    }

    /// `K(z, u + iv)` on the diagonal for `|z| = z_abs`.
    pub fn kernel_diag(&self, z_abs: f64, v: f64) -> Result<KernelValue> {
        if !(z_abs >= 0.0) || !z_abs.is_finite() {
            return Err(LabError::domain("|z| must be nonnegative", z_abs, 0.0));
        }
        let log_floor = self.profile.log_f(z_abs);
        if !(v > 0.0) || v.ln() <= log_floor {
            return Err(LabError::OutsideDomain {
                v,
                floor: log_floor.exp(),
            });
        }
        let log_z2 = if z_abs == 0.0 {
            f64::NEG_INFINITY
        } else {
            2.0 * z_abs.ln()
        };
        let failure = RefCell::new(None);
        let max_terms = Cell::new(1usize);
        let tail = Cell::new(0.0f64);
        let all_converged = Cell::new(true);
        let weight = |tau: f64| -> f64 {
            match self.log_series(log_z2, tau) {
                Ok((ls, t, n, ok)) => {
                    max_terms.set(max_terms.get().max(n));
                    tail.set(tail.get().max(t));
                    if !ok {
                        all_converged.set(false);
                    }
                    ls
                }
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        // S(tau) grows at most like e^{2 tau f(|z|)}, so the s-integrand
        // decays like e^{-s (1 - f(|z|)/v)}.
        let decay = 1.0 - (log_floor - v.ln()).exp();
        let s_max = (S_MAX / decay).min(1e5);
        let res = slice_integral(v, 0, weight, s_max, &self.config.tau_spec);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let series_error = tail.get() * res.value.abs();
        let moment_error = 10.0 * self.config.moment_spec.rel_tol * res.value.abs();
        Ok(KernelValue {
            value: res.value,
            error: res.error_estimate + series_error + moment_error,
            converged: res.converged && all_converged.get(),
            series_terms: max_terms.get(),
            evaluations: res.evaluations,
        })
    }

    pub fn derivative_slices(&self, z_abs: f64, v: f64) -> Result<DerivativeSlices> {
        if !(z_abs >= 0.0) {
            return Err(LabError::domain("|z| must be nonnegative", z_abs, 0.0));
        }
        let log_floor = self.profile.log_f(z_abs);
        if !(v > 0.0) || v.ln() <= log_floor {
            return Err(LabError::OutsideDomain {
                v,
                floor: log_floor.exp(),
            });
        }
        let one = |j: usize, m: u32| -> Result<SliceValue> {
            let failure = RefCell::new(None);
            let weight = |tau: f64| match self.log_moment(j, tau) {
                Ok(l) => -l,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            };
            let res = slice_integral(v, m, weight, S_MAX, &self.config.tau_spec);
            if let Some(e) = failure.into_inner() {
                return Err(e);
            }
            if !res.converged {
                return Err(LabError::Quadrature {
                    context: format!("derivative slice j={j}, m={m}, v={v}"),
                    value: res.value,
                    error: res.error_estimate,
                });
            }
            Ok(SliceValue {
                value: res.value,
                error: res.error_estimate + 10.0 * self.config.moment_spec.rel_tol * res.value.abs(),
            })
        };
        Ok(DerivativeSlices {
            i0: one(0, 0)?,
            i1: one(1, 0)?,
            di0_dv: one(0, 1)?,
            d2i0_dv2: one(0, 2)?,
            di1_dv: one(1, 1)?,
        })
    }
}

/// `(1/(4 pi v^2)) (-1/v)^m int_0^smax s^{1+m} e^{-s} W(s/(2v)) ds`, the
/// tau-integral `(1/pi) int tau (-2tau)^m W(tau) e^{-2 tau v} dtau`.
fn slice_integral<W: Fn(f64) -> f64>(
    v: f64,
    m: u32,
    log_weight: W,
    s_max: f64,
    spec: &QuadratureSpec,
) -> IntegralResult {
    let p = f64::from(1 + m);
    let integrand = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        (p * s.ln() - s + log_weight(s / (2.0 * v))).exp()
    };
    let mut points: Vec<f64> = [0.0, 0.5, 2.0, 6.0, 15.0, 40.0, S_MAX]
        .into_iter()
        .filter(|&s| s < s_max)
        .collect();
    let mut edge = S_MAX;
    while edge * 2.5 < s_max {
        edge *= 2.5;
        points.push(edge);
    }
    points.push(s_max);
    let mut res = integrate_breakpoints(integrand, &points, spec);
    let scale = 1.0 / (4.0 * PI * v * v) * (-1.0 / v).powi(m as i32);
    res.value *= scale;
    res.error_estimate *= scale.abs();
    res
}

/// `m_k(tau)` for a profile.
pub fn weighted_moment(profile: &RadialProfile, k: usize, tau: f64) -> Result<f64> {
    SlicingKernel::new(profile.clone(), SlicingConfig::default()).moment(k, tau)
}

pub fn reference_kernel_diag(
    profile: &RadialProfile,
    z_abs: f64,
    v: f64,
    config: &SlicingConfig,
) -> Result<KernelValue> {
    SlicingKernel::new(profile.clone(), config.clone()).kernel_diag(z_abs, v)
}

pub fn kernel_derivative_slices(
    profile: &RadialProfile,
    z_abs: f64,
    v: f64,
    config: &SlicingConfig,
) -> Result<DerivativeSlices> {
    SlicingKernel::new(profile.clone(), config.clone()).derivative_slices(z_abs, v)
}

/// The slicing formula with `S = 1`, i.e. the upper half-plane, whose
/// diagonal kernel is `1/(4 pi v^2)`.
pub fn half_plane_slice_kernel(v: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(v > 0.0) {
        return Err(LabError::OutsideDomain { v, floor: 0.0 });
    }
    let res = slice_integral(v, 0, |_| 0.0, S_MAX, spec);
    Ok(res.value)
}

/// Diagonal kernel of `D(0, rho1) x D(0, rho2)` at its center.
pub fn bidisc_kernel_center(rho1: f64, rho2: f64) -> Result<f64> {
    if !(rho1 > 0.0) || !(rho2 > 0.0) {
        return Err(LabError::domain("bidisc radii must be positive", rho1.min(rho2), 0.0));
    }
    Ok(1.0 / (PI * PI * rho1 * rho1 * rho2 * rho2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachRegion {
    pub alpha: f64,
    #[serde(rename = "N")]
    pub n: u32,
}

impl ApproachRegion {
    pub fn new(alpha: f64, n: u32) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(LabError::domain("alpha must be positive", alpha, 0.0));
        }
        if n == 0 {
            return Err(LabError::domain("N must be a positive integer", 0.0, 1.0));
        }
        Ok(Self { alpha, n })
    }

    /// `alpha t^{1/N}`.
    pub fn radius(&self, t: f64) -> f64 {
        self.alpha * t.powf(1.0 / f64::from(self.n))
    }

    pub fn contains(&self, profile: &RadialProfile, z: Complex64, w: Complex64) -> bool {
        let in_domain = w.im > 0.0 && w.im.ln() > profile.log_f(z.norm());
        in_domain && (z.norm_sqr() + w.re * w.re).sqrt() < self.radius(w.im)
    }

    /// `r(alpha, N)`: the largest `r <= min(e^{-1/T}, f(a)^2)` such that
    /// `alpha t^{1/N} < (c/2) f^{-1}(t)` for all `t < r`.
    pub fn threshold(&self, profile: &RadialProfile, cert: &DoublingCertificate) -> Result<f64> {
        let a = profile.f_inverse(1.0)?.min(1.0);
        let cap = (-1.0 / cert.t).exp().min(profile.f(a).powi(2));
        let c = cert.c();
        let gap = |t: f64| -> Result<f64> { Ok(0.5 * c * profile.f_inverse(t)? - self.radius(t)) };
        let grid = log_grid(1e-300, cap, 600);
        let mut prev = None;
        for &t in &grid {
            if gap(t)? <= 0.0 {
                let Some(mut lo) = prev else { return Ok(0.0) };
                let mut hi = t;
                for _ in 0..200 {
                    let mid = (0.5 * (f64::ln(lo) + f64::ln(hi))).exp();
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if gap(mid)? > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi / lo - 1.0 < 1e-13 {
                        break;
                    }
                }
                return Ok(lo);
            }
            prev = Some(t);
        }
        Ok(cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InscribedBidisc {
    pub z: Complex64,
    pub t: f64,
    pub c: f64,
    pub z_radius: f64,
    pub w_radius: f64,
    /// `log(t/2) - log f(|z| + z_radius)`; positive means contained.
    pub log_margin: f64,
}

impl InscribedBidisc {
    /// `D(z, (c/2) f^{-1}(t)) x D(it, t/2)`, with containment in `Omega_F`
    /// checked exactly (radially) and on a 32 x 32 sample of the torus.
    pub fn construct(profile: &RadialProfile, c: f64, z: Complex64, t: f64) -> Result<Self> {
        if !(t > 0.0) || !(c > 0.0) {
            return Err(LabError::domain("bidisc needs t > 0 and c > 0", t.min(c), 0.0));
        }
        let z_radius = 0.5 * c * profile.f_inverse(t)?;
        let w_radius = 0.5 * t;
        let b = Self {
            z,
            t,
            c,
            z_radius,
            w_radius,
            log_margin: (t - w_radius).ln() - profile.log_f(z.norm() + z_radius),
        };
        if !(b.log_margin > 0.0) {
            return Err(LabError::Geometry(format!(
                "bidisc at |z| = {}, t = {t} with c = {c} leaves the domain (log margin {})",
                z.norm(),
                b.log_margin
            )));
        }
        if let Some((zeta, omega)) = b.torus_violation(profile) {
            return Err(LabError::Geometry(format!(
                "boundary sample ({zeta}, {omega}) of the bidisc lies outside the domain"
            )));
        }
        Ok(b)
    }

    fn torus_violation(&self, profile: &RadialProfile) -> Option<(Complex64, Complex64)> {
        let center_w = Complex64::new(0.0, self.t);
        for i in 0..32 {
            let zeta = self.z + Complex64::from_polar(self.z_radius, 2.0 * PI * i as f64 / 32.0);
            let floor = profile.log_f(zeta.norm());
            for j in 0..32 {
                let omega = center_w + Complex64::from_polar(self.w_radius, 2.0 * PI * j as f64 / 32.0);
                if !(omega.im > 0.0 && omega.im.ln() > floor) {
                    return Some((zeta, omega));
                }
            }
        }
        None
    }

    pub fn kernel_at_center(&self) -> f64 {
        1.0 / (PI * PI * self.z_radius.powi(2) * self.w_radius.powi(2))
    }
}

/// The inscribed bidisc at `(z, it)` for a point of the approach region
/// below its threshold height.
pub fn inscribe_bidisc(
    profile: &RadialProfile,
    cert: &DoublingCertificate,
    region: &ApproachRegion,
    z: Complex64,
    t: f64,
) -> Result<InscribedBidisc> {
    let w = Complex64::new(0.0, t);
    if !region.contains(profile, z, w) {
        return Err(LabError::Precondition(format!(
            "(|z| = {}, it = {t}i) is not in the approach region",
            z.norm()
        )));
    }
    let threshold = region.threshold(profile, cert)?;
    if t >= threshold {
        return Err(LabError::Threshold { t, threshold });
    }
    InscribedBidisc::construct(profile, cert.c(), z, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub samples: usize,
    /// Basis `zeta^j / (w + iv)^{j+3+l}` for `j < basis`, `l < w_powers`.
    pub basis: usize,
    pub w_powers: usize,
    pub box_half_width: f64,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            basis: 8,
            w_powers: 3,
            box_half_width: 3.0,
            seed: 7,
        }
    }
}

/// Gram-matrix estimate `b^T G^{-1} conj(b)` of `K(p, p)` with a Monte Carlo
/// Gram matrix over `Omega_F` truncated to `|Re zeta|, |Im zeta| < X`.
pub fn monte_carlo_kernel(profile: &RadialProfile, z: Complex64, v: f64, mc: &MonteCarloConfig) -> Result<f64> {
    DomainPoint::new(profile, z, Complex64::new(0.0, v))?;
    if mc.basis == 0 || mc.w_powers == 0 || mc.samples == 0 {
        return Err(LabError::Precondition(
            "Monte Carlo estimate needs a nonempty basis and samples".into(),
        ));
    }
    let n = mc.basis * mc.w_powers;
    let x = mc.box_half_width;
    let shift = Complex64::new(0.0, v);
    let basis = |zeta: Complex64, w: Complex64, out: &mut [Complex64]| {
        let inv = 1.0 / (w + shift);
        let mut p = inv * inv * inv;
        for row in out.chunks_mut(mc.w_powers) {
            let mut q = p;
            for o in row.iter_mut() {
                *o = q;
                q *= inv;
            }
            p *= zeta * inv;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    let mut gram = DMatrix::<Complex64>::zeros(n, n);
    let mut phi = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..mc.samples {
        let zeta = Complex64::new(rng.random_range(-x..x), rng.random_range(-x..x));
        let q: f64 = rng.random();
        let p: f64 = rng.random();
        let y = v * q / (1.0 - q);
        let im = profile.f(zeta.norm()) + y;
        let width = im + v;
        let re = width * (PI * (p - 0.5)).tan();
        // inverse of the sampling density in (zeta, y, u)
        let weight = 4.0 * x * x * (v + y).powi(2) / v * PI * (re * re + width * width) / width;
        basis(zeta, Complex64::new(re, im), &mut phi);
        for a in 0..n {
            for b in 0..n {
                gram[(a, b)] += phi[a].conj() * phi[b] * weight;
            }
        }
    }
    gram /= Complex64::new(mc.samples as f64, 0.0);
    basis(z, Complex64::new(0.0, v), &mut phi);
    let rhs = DVector::from_iterator(n, phi.iter().map(|c| c.conj()));
    let sol = gram
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LabError::Numerical("singular Monte Carlo Gram matrix".into()))?;
    let k: Complex64 = phi.iter().zip(sol.iter()).map(|(b, s)| b * s).sum();
    Ok(k.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|i| i as f64).product()
    }

    #[test]
    fn siegel_moments() {
        let f = RadialProfile::quadratic_pure();
        let kern = SlicingKernel::new(f, SlicingConfig::default());
        for &tau in &[0.01, 1.0, 37.0, 1e5] {
            for k in [0usize, 1, 5, 20] {
                let exact = PI * factorial(k) / (2.0 * tau as f64).powi(k as i32 + 1);
                let got = kern.moment(k, tau).unwrap();
                assert!(rel(got, exact) < 1e-10, "k={k} tau={tau}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn quartic_moments() {
        let f = RadialProfile::pure(crate::profile::Family::Monomial { m: 2 }).unwrap();
        for &tau in &[0.3f64, 4.0] {
            for k in 0..4usize {
                let exact = 0.5 * PI * gamma_half_integer(k + 1) / (2.0 * tau).powf((k as f64 + 1.0) / 2.0);
                assert!(rel(weighted_moment(&f, k, tau).unwrap(), exact) < 1e-10);
            }
        }
    }

    #[test]
    fn quadrature_moments_match_closed_form() {
        for m in [1u32, 2, 3] {
            let kern = SlicingKernel::new(
                RadialProfile::pure(Family::Monomial { m }).unwrap(),
                SlicingConfig::default(),
            );
            for &tau in &[0.02f64, 1.0, 3e4] {
                for k in [0usize, 3, 40, 700] {
                    let closed = kern.log_moment(k, tau).unwrap();
                    let quad = kern.log_moment_quadrature(k, tau).unwrap();
                    assert!(
                        (closed - quad).abs() < 1e-10 * closed.abs().max(1.0),
                        "m={m} k={k} tau={tau}"
                    );
                }
            }
        }
    }

    // Gamma(n/2)
    fn gamma_half_integer(n: usize) -> f64 {
        if n % 2 == 0 {
            factorial(n / 2 - 1)
        } else {
            let mut g = PI.sqrt();
            let mut x = 0.5;
            while x < n as f64 / 2.0 - 0.25 {
                g *= x;
                x += 1.0;
            }
            g
        }
    }

    #[test]
    fn moment_decreases_in_tau() {
        let f = RadialProfile::exp_inverse(1.0).unwrap();
        let kern = SlicingKernel::new(f, SlicingConfig::default());
        let mut prev = f64::INFINITY;
        for tau in log_grid(1e-3, 1e8, 12) {
            let m = kern.moment(0, tau).unwrap();
            assert!(m > 0.0 && m < prev);
            prev = m;
        }
    }

    #[test]
    fn siegel_kernel() {
        let f = RadialProfile::quadratic_pure();
        let kern = SlicingKernel::new(f, SlicingConfig::with_k_max(400));
        let k = kern.kernel_diag(0.0, 0.5).unwrap();
        assert!(rel(k.value, 1.0 / (2.0 * PI * PI * 0.125)) < 1e-9);
        assert_eq!(k.series_terms, 1);
        let k = kern.kernel_diag(0.3, 0.5).unwrap();
        let h: f64 = 0.5 - 0.09;
        assert!(rel(k.value, 1.0 / (2.0 * PI * PI * h.powi(3))) < 1e-7, "{k:?}");
        assert!(k.converged);
    }

    #[test]
    fn outside_domain_rejected() {
        let f = RadialProfile::quadratic_pure();
        let e = reference_kernel_diag(&f, 0.5, 0.25, &SlicingConfig::default()).unwrap_err();
        assert!(matches!(e, LabError::OutsideDomain { .. }));
    }

    #[test]
    fn half_plane_calibration() {
        let spec = QuadratureSpec::with_rel_tol(1e-12);
        for &v in &[0.1, 1.0, 10.0] {
            let k = half_plane_slice_kernel(v, &spec).unwrap();
            assert!(rel(k, 1.0 / (4.0 * PI * v * v)) < 1e-9);
        }
    }

    #[test]
    fn siegel_slices() {
        let f = RadialProfile::quadratic_pure();
        let s = kernel_derivative_slices(&f, 0.0, 0.7, &SlicingConfig::default()).unwrap();
        let v: f64 = 0.7;
        assert!(rel(s.i0.value, 1.0 / (2.0 * PI * PI * v.powi(3))) < 1e-9);
        assert!(rel(s.di0_dv.value, -3.0 / (2.0 * PI * PI * v.powi(4))) < 1e-9);
        assert!(rel(s.d2i0_dv2.value, 12.0 / (2.0 * PI * PI * v.powi(5))) < 1e-9);
        assert!(s.i1.value > 0.0);
    }

    #[test]
    fn bidisc_center() {
        assert!(rel(bidisc_kernel_center(1.0, 1.0).unwrap(), 1.0 / (PI * PI)) < 1e-15);
        let a = bidisc_kernel_center(0.3, 0.2).unwrap();
        let b = bidisc_kernel_center(0.6, 0.2).unwrap();
        assert!(rel(a / b, 4.0) < 1e-14);
        assert!(bidisc_kernel_center(0.0, 1.0).is_err());
    }

    #[test]
    fn approach_region_membership() {
        let f = RadialProfile::exp_inverse(1.0).unwrap();
        let reg = ApproachRegion::new(1.0, 2).unwrap();
        assert!(reg.contains(&f, Complex64::new(0.0, 0.0), Complex64::new(0.0, 1e-4)));
        assert!(!reg.contains(&f, Complex64::new(0.02, 0.0), Complex64::new(0.0, 1e-4)));
        assert!(!reg.contains(&f, Complex64::new(0.0, 0.0), Complex64::new(0.05, 1e-4)));
    }

    #[test]
    fn inscribed_bidisc_exp_inverse() {
        let f = RadialProfile::exp_inverse(1.0).unwrap();
        let cert = crate::doubling::find_sigma(&f.lambda(), 0.4, 1e6)
            .unwrap()
            .into_certificate()
            .unwrap();
        let reg = ApproachRegion::new(1.0, 2).unwrap();
        let r = reg.threshold(&f, &cert).unwrap();
        assert!(r > 0.0 && r < 0.01, "{r}");
        let t = 0.5 * r;
        let b = inscribe_bidisc(&f, &cert, &reg, Complex64::new(0.0, 0.0), t).unwrap();
        assert!(rel(b.z_radius, 0.5 * cert.c() / (1.0 / t).ln()) < 1e-10);
        assert!(rel(b.w_radius, t / 2.0) < 1e-15);
        let e = inscribe_bidisc(&f, &cert, &reg, Complex64::new(0.0, 0.0), 2.0 * r).unwrap_err();
        assert!(matches!(e, LabError::Threshold { .. }));
    }

    #[test]
    fn oversized_bidisc_is_a_geometry_error() {
        let f = RadialProfile::exp_inverse(1.0).unwrap();
        let e = InscribedBidisc::construct(&f, 20.0, Complex64::new(0.0, 0.0), 1e-3).unwrap_err();
        assert!(matches!(e, LabError::Geometry(_)));
    }
}
