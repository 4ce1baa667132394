//! Radial profiles `f` with `F(z) = f(|z|)`, evaluated in log space.
//!
//! A profile is a core formula on `[0, x_c)` glued at the cutoff `x_c` to a
//! C¹ polynomial growth extension
//!
//! ```text
//! f(x) = f(x_c) + f'(x_c) d + kappa d^2 + quartic d^4,   d = x - x_c,
//! ```
//!
//! or a pure formula on all of `[0, inf)` when no cutoff is given. Every
//! consumer works with `log f`, since the flat families underflow double
//! precision long before `x` reaches zero.

use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Upper end of the validation grids.
pub const X_MAX: f64 = 10.0;
/// Points in a validation grid.
pub const VALIDATION_GRID: usize = 10_000;
/// Absolute slack for `f'' + f'/x >= 0`.
pub const SUBHARMONIC_TOL: f64 = 1e-10;

/// User-supplied core formula. Only `value` is required; flat profiles should
/// also override `log_value` so that it stays exact after `value` underflows.
pub trait CoreFunction: Send + Sync + fmt::Debug {
    fn value(&self, x: f64) -> f64;

    fn log_value(&self, x: f64) -> f64 {
        self.value(x).ln()
    }

    /// Power `g` with `f(x) ~ x^g` as `x -> inf` (pure profiles only).
    fn growth_exponent(&self) -> f64 {
        2.0
    }
}

#[derive(Clone, Debug)]
pub enum Family {
    /// `x^(2M)`: finite type, never doubling.
    Monomial {
        m: u32,
    },
    /// `exp(-1/x^p)`.
    ExpInverse {
        p: f64,
    },
    /// `exp(-exp(1/x))`.
    DoubleExp,
    Custom(Arc<dyn CoreFunction>),
}

impl Family {
    pub fn name(&self) -> String {
        match self {
            Family::Monomial { m } => format!("monomial(M={m})"),
            Family::ExpInverse { p } => format!("exp_inverse(p={p})"),
            Family::DoubleExp => "double_exp".into(),
            Family::Custom(_) => "custom".into(),
        }
    }

    fn log_core(&self, x: f64) -> f64 {
        match self {
            Family::Monomial { m } => 2.0 * f64::from(*m) * x.ln(),
            Family::ExpInverse { p } => -x.powf(-p),
            Family::DoubleExp => -(1.0 / x).exp(),
            Family::Custom(c) => c.log_value(x),
        }
    }

    fn value_core(&self, x: f64) -> f64 {
        match self {
            Family::Custom(c) => c.value(x),
            _ => self.log_core(x).exp(),
        }
    }

    /// `(f', f'')` of the core formula at `x > 0`.
    fn derivs_core(&self, x: f64) -> (f64, f64) {
        let lx = x.ln();
        match self {
            Family::Monomial { m } => {
                let n = 2.0 * f64::from(*m);
                (n * x.powf(n - 1.0), n * (n - 1.0) * x.powf(n - 2.0))
            }
            Family::ExpInverse { p } => {
                let lf = self.log_core(x);
                let f1 = (p.ln() - (p + 1.0) * lx + lf).exp();
                let a = (2.0 * p.ln() - 2.0 * (p + 1.0) * lx + lf).exp();
                let b = ((p * (p + 1.0)).ln() - (p + 2.0) * lx + lf).exp();
                (f1, a - b)
            }
            Family::DoubleExp => {
                let lf = self.log_core(x);
                let inv = 1.0 / x;
                let f1 = (-2.0 * lx + inv + lf).exp();
                let a = (-4.0 * lx + 2.0 * inv + lf).exp();
                let b = (-4.0 * lx + inv + lf).exp();
                let c = (2f64.ln() - 3.0 * lx + inv + lf).exp();
                (f1, a - b - c)
            }
            Family::Custom(c) => {
                let h = (1e-6 * x).max(1e-12);
                let fp = c.value(x + h);
                let f0 = c.value(x);
                let fm = c.value(x - h);
                ((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h))
            }
        }
    }

    /// Solve `log f(x) = target` on the core, when a closed form exists.
    fn solve_log_core(&self, target: f64) -> Option<f64> {
        match self {
            Family::Monomial { m } => Some((target / (2.0 * f64::from(*m))).exp()),
            Family::ExpInverse { p } => Some((-target).powf(-1.0 / p)),
            Family::DoubleExp if target < -1.0 => Some(1.0 / (-target).ln()),
            _ => None,
        }
    }

    fn pure_growth_exponent(&self) -> f64 {
        match self {
            Family::Monomial { m } => 2.0 * f64::from(*m),
            Family::Custom(c) => c.growth_exponent(),
            // exp-type families saturate at 1; they are never used pure.
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extension {
    pub match_value: f64,
    pub match_slope: f64,
    pub kappa: f64,
    pub quartic: f64,
}

impl Extension {
    fn value(&self, d: f64) -> f64 {
        let d2 = d * d;
        self.match_value + self.match_slope * d + self.kappa * d2 + self.quartic * d2 * d2
    }

    fn derivs(&self, d: f64) -> (f64, f64) {
        let d2 = d * d;
        (
            self.match_slope + 2.0 * self.kappa * d + 4.0 * self.quartic * d2 * d,
            2.0 * self.kappa + 12.0 * self.quartic * d2,
        )
    }

    /// Smallest `d >= 0` with `value(d) = target` (target above match value).
    fn solve(&self, target: f64) -> f64 {
        let mut hi = 1.0;
        while self.value(hi) < target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `f` together with `log f`; `log_value` stays exact when `value` underflows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValue {
    pub value: f64,
    pub log_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivs {
    pub f1: f64,
    pub f2: f64,
}

#[derive(Clone, Debug)]
pub struct RadialProfile {
    family: Family,
    cutoff: Option<f64>,
    extension: Option<Extension>,
}

pub const DEFAULT_CUTOFF: f64 = 0.5;
pub const DEFAULT_KAPPA: f64 = 1.0;
pub const DEFAULT_QUARTIC: f64 = 1.0;

impl RadialProfile {
    /// Core formula glued at `cutoff` to the growth extension.
    ///
    /// `kappa` is raised to `max(kappa, 1, f''(x_c)/2)` so that the second
    /// derivative never jumps down at the cutoff.
    pub fn with_extension(family: Family, cutoff: f64, kappa: f64, quartic: f64) -> Result<Self> {
        if !(cutoff > 0.0) || !cutoff.is_finite() {
            return Err(LabError::domain("cutoff must be positive", cutoff, 0.0));
        }
        if !(kappa > 0.0) {
            return Err(LabError::domain("kappa must be positive", kappa, 0.0));
        }
        if !(quartic >= 0.0) {
            return Err(LabError::domain(
                "quartic coefficient must be nonnegative",
                quartic,
                0.0,
            ));
        }
        check_family(&family)?;
        let value = family.value_core(cutoff);
        let (slope, second) = family.derivs_core(cutoff);
        let kappa = kappa.max(1.0).max(0.5 * second);
        Ok(Self {
            family,
            cutoff: Some(cutoff),
            extension: Some(Extension {
                match_value: value,
                match_slope: slope,
                kappa,
                quartic,
            }),
        })
    }

    /// The core formula on all of `[0, inf)`.
    pub fn pure(family: Family) -> Result<Self> {
        check_family(&family)?;
        if matches!(family, Family::ExpInverse { .. } | Family::DoubleExp) {
            return Err(LabError::Config(format!(
                "{} is bounded and needs a growth extension",
                family.name()
            )));
        }
        Ok(Self {
            family,
            cutoff: None,
            extension: None,
        })
    }

    pub fn exp_inverse(p: f64) -> Result<Self> {
        Self::with_extension(Family::ExpInverse { p }, DEFAULT_CUTOFF, DEFAULT_KAPPA, DEFAULT_QUARTIC)
    }

    pub fn double_exp() -> Result<Self> {
        Self::with_extension(Family::DoubleExp, DEFAULT_CUTOFF, DEFAULT_KAPPA, DEFAULT_QUARTIC)
    }

    pub fn monomial(m: u32) -> Result<Self> {
        Self::with_extension(Family::Monomial { m }, DEFAULT_CUTOFF, DEFAULT_KAPPA, DEFAULT_QUARTIC)
    }

    /// `f(r) = r^2`: the Siegel half-space, used as the closed-form oracle.
    pub fn quadratic_pure() -> Self {
        Self::pure(Family::Monomial { m: 1 }).expect("monomial is valid")
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.cutoff
    }

    pub fn extension(&self) -> Option<&Extension> {
        self.extension.as_ref()
    }

    pub fn name(&self) -> String {
        match (self.cutoff, self.extension) {
            (Some(c), Some(e)) => format!(
                "{} cut at {c}, kappa {}, quartic {}",
                self.family.name(),
                e.kappa,
                e.quartic
            ),
            _ => format!("{} (pure)", self.family.name()),
        }
    }

    fn in_extension(&self, x: f64) -> Option<(f64, &Extension)> {
        match (self.cutoff, self.extension.as_ref()) {
            (Some(c), Some(e)) if x >= c => Some((x - c, e)),
            _ => None,
        }
    }

    /// `log f(x)` for `x >= 0` without argument checks.
    #[inline]
    pub fn log_f(&self, x: f64) -> f64 {
        if x == 0.0 {
            return f64::NEG_INFINITY;
        }
        match self.in_extension(x) {
            Some((d, e)) => e.value(d).ln(),
            None => self.family.log_core(x),
        }
    }

    /// `f(x)` for `x >= 0` without argument checks.
    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        match self.in_extension(x) {
            Some((d, e)) => e.value(d),
            None => self.family.value_core(x),
        }
    }

    pub fn eval(&self, x: f64) -> Result<ProfileValue> {
        if !(x >= 0.0) {
            return Err(LabError::domain("profile argument must be nonnegative", x, 0.0));
        }
        Ok(ProfileValue {
            value: self.f(x),
            log_value: self.log_f(x),
        })
    }

    pub fn derivs(&self, x: f64) -> Result<Derivs> {
        if !(x > 0.0) {
            return Err(LabError::domain("derivative argument must be positive", x, 0.0));
        }
        let (f1, f2) = match self.in_extension(x) {
            Some((d, e)) => e.derivs(d),
            None => self.family.derivs_core(x),
        };
        Ok(Derivs { f1, f2 })
    }

    /// Power `g` with `f(x) ~ x^g` at infinity.
    pub fn growth_exponent(&self) -> f64 {
        match self.extension {
            Some(e) if e.quartic > 0.0 => 4.0,
            Some(_) => 2.0,
            None => self.family.pure_growth_exponent(),
        }
    }

    /// The `x >= 0` solving `log f(x) = target`.
    fn solve_log(&self, target: f64) -> f64 {
        if target == f64::NEG_INFINITY {
            return 0.0;
        }
        let core_top = self.cutoff.map(|c| self.family.log_core(c));
        let in_core = core_top.is_none_or(|top| target < top);
        if in_core {
            if let Some(x) = self.family.solve_log_core(target) {
                return x;
            }
            let hi = self.cutoff.unwrap_or_else(|| {
                let mut hi = 1.0;
                while self.family.log_core(hi) < target {
                    hi *= 2.0;
                }
                hi
            });
            return bisect_increasing(|x| self.family.log_core(x), target, 0.0, hi);
        }
        let (c, e) = (self.cutoff.unwrap(), self.extension.as_ref().unwrap());
        c + e.solve(target.exp())
    }

    /// `f^{-1}(t)` for `t > 0`; through `G_f(1/log(1/t))` below 1.
    pub fn f_inverse(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(LabError::domain(
                "f_inverse argument must be positive and finite",
                t,
                0.0,
            ));
        }
        if t < 1.0 {
            self.lambda().g_inverse(1.0 / (1.0 / t).ln())
        } else {
            Ok(self.solve_log(t.ln()))
        }
    }

    /// `f^{-1}(exp(log_t))`, exact even when `exp(log_t)` underflows.
    pub fn f_inverse_log(&self, log_t: f64) -> Result<f64> {
        if log_t.is_nan() || log_t == f64::INFINITY {
            return Err(LabError::domain("f_inverse_log argument", log_t, f64::INFINITY));
        }
        Ok(self.solve_log(log_t))
    }

    pub fn lambda(&self) -> LambdaView<'_> {
        LambdaView::new(self)
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

fn check_family(family: &Family) -> Result<()> {
    match family {
        Family::Monomial { m } if *m == 0 => Err(LabError::domain("monomial M must be positive", 0.0, 1.0)),
        Family::ExpInverse { p } if !(*p > 0.0) || !p.is_finite() => {
            Err(LabError::domain("exp_inverse p must be positive", *p, 0.0))
        }
        _ => Ok(()),
    }
}

/// Bisection for an increasing `g` on `[lo, hi]`.
fn bisect_increasing<G: Fn(f64) -> f64>(g: G, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `Lambda_f(x) = -1/log f(x)` on `[0, f^{-1}(1))` and its inverse `G_f`.
#[derive(Debug, Clone, Copy)]
pub struct LambdaView<'a> {
    profile: &'a RadialProfile,
    validity_bound: f64,
}

impl<'a> LambdaView<'a> {
    pub fn new(profile: &'a RadialProfile) -> Self {
        let validity_bound = profile.solve_log(0.0);
        Self {
            profile,
            validity_bound,
        }
    }

    pub fn profile(&self) -> &'a RadialProfile {
        self.profile
    }

    /// `f^{-1}(1)`: `Lambda_f` is defined strictly below it.
    pub fn validity_bound(&self) -> f64 {
        self.validity_bound
    }

    pub fn lambda(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) || x >= self.validity_bound {
            return Err(LabError::domain(
                "Lambda_f argument must lie in [0, f^-1(1))",
                x,
                self.validity_bound,
            ));
        }
        Ok(self.lambda_unchecked(x))
    }

    #[inline]
    pub(crate) fn lambda_unchecked(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let in_core = self.profile.cutoff.is_none_or(|c| x < c);
        if in_core {
            match self.profile.family {
                Family::ExpInverse { p } => return x.powf(p),
                Family::DoubleExp => return (-1.0 / x).exp(),
                Family::Monomial { m } => return 1.0 / (2.0 * f64::from(m) * (1.0 / x).ln()),
                Family::Custom(_) => {}
            }
        }
        -1.0 / self.profile.log_f(x)
    }

    /// `log Lambda_f(x)`, accurate where `Lambda_f` itself is subnormal or
    /// underflows.
    pub(crate) fn log_lambda_unchecked(&self, x: f64) -> f64 {
        if x == 0.0 {
            return f64::NEG_INFINITY;
        }
        let in_core = self.profile.cutoff.is_none_or(|c| x < c);
        if in_core {
            match self.profile.family {
                Family::ExpInverse { p } => return p * x.ln(),
                Family::DoubleExp => return -1.0 / x,
                Family::Monomial { m } => return -(2.0 * f64::from(m) * (1.0 / x).ln()).ln(),
                Family::Custom(_) => {}
            }
        }
        -(-self.profile.log_f(x)).ln()
    }

    /// `G_f(t) = Lambda_f^{-1}(t)` for `t >= 0`.
    pub fn g_inverse(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t.is_nan() {
            return Err(LabError::domain("G_f argument must be nonnegative", t, 0.0));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        if t == f64::INFINITY {
            return Ok(self.validity_bound);
        }
        // Lambda_f(x) = t  <=>  log f(x) = -1/t
        Ok(self.profile.solve_log(-1.0 / t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub check: &'static str,
    pub x: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub profile: String,
    pub f0_zero: bool,
    pub strictly_increasing: bool,
    pub subharmonic: bool,
    pub grows_to_infinity: bool,
    pub infinite_order_vanishing: bool,
    pub extension_c1: bool,
    pub witnesses: Vec<Witness>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.f0_zero
            && self.strictly_increasing
            && self.subharmonic
            && self.grows_to_infinity
            && self.infinite_order_vanishing
            && self.extension_c1
    }
}

/// `n` points log-spaced on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

fn validate(profile: &RadialProfile) -> ValidationReport {
    let mut witnesses = Vec::new();
    let grid = log_grid(X_MAX * 1e-8, X_MAX, VALIDATION_GRID);

    let f0 = profile.f(0.0);
    let f0_zero = f0 == 0.0;
    if !f0_zero {
        witnesses.push(Witness {
            check: "f0_zero",
            x: 0.0,
            detail: format!("f(0) = {f0}"),
        });
    }

    let mut strictly_increasing = true;
    let mut prev = (0.0, f64::NEG_INFINITY, f0);
    for &x in &grid {
        let v = profile.f(x);
        let lv = profile.log_f(x);
        // both logs at -inf: below double precision, nothing to compare
        let unresolved = lv == f64::NEG_INFINITY && prev.1 == f64::NEG_INFINITY;
        let up = unresolved || v > prev.2 || (v == prev.2 && lv > prev.1);
        if !up {
            strictly_increasing = false;
            witnesses.push(Witness {
                check: "strictly_increasing",
                x,
                detail: format!("f({}) = {} >= f({x}) = {v}", prev.0, prev.2),
            });
            break;
        }
        prev = (x, lv, v);
    }

    let mut subharmonic = true;
    for &x in &grid {
        let d = profile.derivs(x).expect("grid is positive");
        let lap = d.f2 + d.f1 / x;
        if !(lap >= -SUBHARMONIC_TOL) {
            subharmonic = false;
            witnesses.push(Witness {
                check: "subharmonic",
                x,
                detail: format!("f'' + f'/x = {lap:e}"),
            });
            break;
        }
    }

    let top = profile.f(X_MAX);
    let slope = profile.derivs(X_MAX).map(|d| d.f1).unwrap_or(f64::NAN);
    let grows_to_infinity = top > 1.0 && slope > 0.0;
    if !grows_to_infinity {
        witnesses.push(Witness {
            check: "grows_to_infinity",
            x: X_MAX,
            detail: format!("f = {top}, f' = {slope}"),
        });
    }

    // log(f(x)/x^n) must head to -inf as x -> 0 for every n <= 20; n = 20 is
    // the binding case.
    let probe: Vec<f64> = (1..=300)
        .map(|k| profile.log_f(10f64.powi(-k)) + 20.0 * f64::from(k) * 10f64.ln())
        .collect();
    let tail = &probe[probe.len() - 10..];
    let decreasing = tail.windows(2).all(|w| w[1] <= w[0]);
    let infinite_order_vanishing = decreasing && probe[probe.len() - 1] < -50.0;
    if !infinite_order_vanishing {
        witnesses.push(Witness {
            check: "infinite_order_vanishing",
            x: 1e-300,
            detail: format!("log(f(x)/x^20) = {}", probe[probe.len() - 1]),
        });
    }

    let extension_c1 = match (profile.cutoff, profile.extension) {
        (Some(c), Some(_)) => {
            let h = 1e-7 * c;
            let left = profile.family.value_core(c - h);
            let at = profile.f(c);
            let right = profile.f(c + h);
            let core_at = profile.family.value_core(c);
            let value_ok = (at - core_at).abs() <= 1e-12 * core_at.abs().max(1e-300);
            let sl = (at - left) / h;
            let sr = (right - at) / h;
            let slope_ok = (sl - sr).abs() <= 1e-4 * sl.abs().max(sr.abs()).max(1e-300);
            if !(value_ok && slope_ok) {
                witnesses.push(Witness {
                    check: "extension_c1",
                    x: c,
                    detail: format!("value {core_at} vs {at}, slopes {sl} vs {sr}"),
                });
            }
            value_ok && slope_ok
        }
        _ => true,
    };

    ValidationReport {
        profile: profile.name(),
        f0_zero,
        strictly_increasing,
        subharmonic,
        grows_to_infinity,
        infinite_order_vanishing,
        extension_c1,
        witnesses,
    }
}

/// Profile block of the run configuration, e.g.
/// `{"family":"exp_inverse","p":1.0,"cutoff":0.5,"kappa":1.0}`.
/// `"cutoff": null` selects the pure formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub family: String,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub m: Option<u32>,
    #[serde(default = "default_cutoff")]
    pub cutoff: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub quartic: Option<f64>,
}

fn default_cutoff() -> Option<f64> {
    Some(DEFAULT_CUTOFF)
}

impl ProfileSpec {
    pub fn exp_inverse(p: f64) -> Self {
        Self {
            family: "exp_inverse".into(),
            p: Some(p),
            m: None,
            cutoff: Some(DEFAULT_CUTOFF),
            kappa: Some(DEFAULT_KAPPA),
            quartic: None,
        }
    }

    pub fn build(&self) -> Result<RadialProfile> {
        let family = match self.family.as_str() {
            "exp_inverse" | "expinv" => Family::ExpInverse {
                p: self
                    .p
                    .ok_or_else(|| LabError::Config("exp_inverse needs \"p\"".into()))?,
            },
            "double_exp" | "doubleexp" => Family::DoubleExp,
            "monomial" => Family::Monomial {
                m: self.m.ok_or_else(|| LabError::Config("monomial needs \"m\"".into()))?,
            },
            "quadratic_pure" | "quadratic-pure" => return Ok(RadialProfile::quadratic_pure()),
            other => return Err(LabError::Config(format!("unknown profile family {other:?}"))),
        };
        match self.cutoff {
            None => RadialProfile::pure(family),
            Some(c) => RadialProfile::with_extension(
                family,
                c,
                self.kappa.unwrap_or(DEFAULT_KAPPA),
                self.quartic.unwrap_or(DEFAULT_QUARTIC),
            ),
        }
    }
}
