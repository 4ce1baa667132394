//! Adaptive Gauss-Kronrod quadrature on finite and semi-infinite intervals,
//! and series summation with a caller-supplied tail bound.
//!
//! The integrator is a global adaptive scheme over a list of initial panels
//! (QAG without extrapolation). Each panel is evaluated with the 10/21-point
//! Gauss-Kronrod pair and the QUADPACK error rescaling. Semi-infinite panels
//! are mapped to `(0, 1]` with `x = a + (1 - u) / u`.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-14,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        self.rel_tol > 0.0 && self.abs_tol >= 0.0 && self.max_subdivisions > 0
    }

    fn target(&self, value: f64) -> f64 {
        (self.rel_tol * value.abs()).max(self.abs_tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl IntegralResult {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
            converged: true,
        }
    }

    /// Relative error estimate; zero for an exactly-zero result.
    pub fn rel_error(&self) -> f64 {
        if self.value == 0.0 {
            if self.error_estimate == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.error_estimate / self.value.abs()
        }
    }
}

/// Bound `|f(x)| <= amplitude * exp(-rate * x)` valid for every `x` past the
/// point where the certificate is attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCertificate {
    pub rate: f64,
    pub amplitude: f64,
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[derive(Debug, Clone, Copy)]
enum Panel {
    Finite(f64, f64),
    /// `[a, +inf)` seen through `u in (u0, u1]`, `x = a + (1 - u) / u`.
    Tail {
        a: f64,
        u0: f64,
        u1: f64,
    },
}

impl Panel {
    fn split(self) -> (Panel, Panel) {
        match self {
            Panel::Finite(lo, hi) => {
                let mid = 0.5 * (lo + hi);
                (Panel::Finite(lo, mid), Panel::Finite(mid, hi))
            }
            Panel::Tail { a, u0, u1 } => {
                let mid = 0.5 * (u0 + u1);
                (Panel::Tail { a, u0, u1: mid }, Panel::Tail { a, u0: mid, u1 })
            }
        }
    }

    fn splittable(self) -> bool {
        let (lo, hi) = match self {
            Panel::Finite(lo, hi) => (lo, hi),
            Panel::Tail { u0, u1, .. } => (u0, u1),
        };
        let mid = 0.5 * (lo + hi);
        (hi - lo) > 64.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE) && mid > lo && mid < hi
    }
}

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut err = err.abs();
    if resasc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / resasc).powf(1.5);
        err = if scale < 1.0 { resasc * scale } else { resasc };
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * resabs;
        if min_err > err {
            err = min_err;
        }
    }
    err
}

/// One 21-point Gauss-Kronrod pass on `[a, b]`: `(value, error)`.
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let abs_half = half.abs();

    let fc = f(center);
    let mut res_g = 0.0;
    let mut res_k = WGK[10] * fc;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];

    for j in 0..5 {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_g += WG[j] * (f1 + f2);
        res_k += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        res_k += WGK[jtwm1] * (f1 + f2);
        res_abs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }

    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let value = res_k * half;
    let err = rescale_error((res_k - res_g) * half, res_abs * abs_half, res_asc * abs_half);
    (value, err)
}

struct Scored {
    panel: Panel,
    value: f64,
    error: f64,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Scored {}
impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn eval_panel<F: Fn(f64) -> f64>(f: &F, panel: Panel) -> (f64, f64) {
    match panel {
        Panel::Finite(lo, hi) => gk21(f, lo, hi),
        Panel::Tail { a, u0, u1 } => {
            let g = |u: f64| {
                let x = a + (1.0 - u) / u;
                let y = f(x) / (u * u);
                if y.is_finite() {
                    y
                } else {
                    0.0
                }
            };
            gk21(&g, u0, u1)
        }
    }
}

fn run_adaptive<F: Fn(f64) -> f64>(f: &F, panels: Vec<Panel>, spec: &QuadratureSpec) -> IntegralResult {
    let mut heap = BinaryHeap::new();
    let mut frozen_value = 0.0;
    let mut frozen_error = 0.0;
    let mut evaluations = 0;
    for p in panels {
        let (value, error) = eval_panel(f, p);
        evaluations += 21;
        heap.push(Scored { panel: p, value, error });
    }

    let totals = |heap: &BinaryHeap<Scored>, fv: f64, fe: f64| {
        let v: f64 = heap.iter().map(|s| s.value).sum::<f64>() + fv;
        let e: f64 = heap.iter().map(|s| s.error).sum::<f64>() + fe;
        (v, e)
    };

    let (mut total, mut err) = totals(&heap, frozen_value, frozen_error);
    let mut splits = 0;
    while err > spec.target(total) && splits < spec.max_subdivisions {
        let Some(worst) = heap.pop() else { break };
        if !worst.panel.splittable() {
            frozen_value += worst.value;
            frozen_error += worst.error;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let (left, right) = worst.panel.split();
        let (lv, le) = eval_panel(f, left);
        let (rv, re) = eval_panel(f, right);
        evaluations += 42;
        splits += 1;
        heap.push(Scored {
            panel: left,
            value: lv,
            error: le,
        });
        heap.push(Scored {
            panel: right,
            value: rv,
            error: re,
        });
        // Incremental update drifts; recompute occasionally.
        total += lv + rv - worst.value;
        err += le + re - worst.error;
        if splits % 64 == 0 {
            (total, err) = totals(&heap, frozen_value, frozen_error);
        }
    }
    let (total, err) = totals(&heap, frozen_value, frozen_error);
    let converged = total.is_finite() && err <= spec.target(total);
    IntegralResult {
        value: total,
        error_estimate: err,
        evaluations,
        converged,
    }
}

/// Integrate `f` over `[a, b]`; `b` may be `f64::INFINITY`.
///
/// Returns `converged = false` rather than an error when the tolerance is
/// not reached within `max_subdivisions`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> IntegralResult {
    integrate_breakpoints(f, &[a, b], spec)
}

/// Integrate over `points[0]..points[last]` with the given interior
/// breakpoints as initial panel edges. The last point may be `+inf`.
pub fn integrate_breakpoints<F: Fn(f64) -> f64>(f: F, points: &[f64], spec: &QuadratureSpec) -> IntegralResult {
    assert!(points.len() >= 2, "need at least two points");
    let mut panels = Vec::with_capacity(points.len());
    for w in points.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if !(hi > lo) {
            continue;
        }
        if hi.is_infinite() {
            panels.push(Panel::Tail {
                a: lo,
                u0: 0.0,
                u1: 1.0,
            });
        } else {
            panels.push(Panel::Finite(lo, hi));
        }
    }
    if panels.is_empty() {
        return IntegralResult::zero();
    }
    run_adaptive(&f, panels, spec)
}

/// Integrate over `[a, +inf)` using an exponential decay certificate valid
/// past `a`: the domain is cut where the certified tail drops below a tenth
/// of the absolute tolerance (or far enough to be negligible relative to the
/// running value), and the tail bound is added to the error estimate.
pub fn integrate_with_decay<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    decay: DecayCertificate,
    spec: &QuadratureSpec,
) -> IntegralResult {
    if !(decay.rate > 0.0) || !decay.amplitude.is_finite() {
        return integrate(f, a, f64::INFINITY, spec);
    }
    // First pass: the tail beyond x is amplitude * exp(-rate x) / rate.
    let tail = |x: f64| decay.amplitude * (-decay.rate * x).exp() / decay.rate;
    let mut cut = a + 1.0 / decay.rate;
    let head = integrate(&f, a, cut, spec);
    let mut scale = head.value.abs();
    let mut acc = head;
    loop {
        let goal = (0.1 * spec.abs_tol).max(1e-3 * spec.rel_tol * scale);
        if tail(cut) <= goal {
            break;
        }
        let next = a + 2.0 * (cut - a);
        let piece = integrate(&f, cut, next, spec);
        acc.value += piece.value;
        acc.error_estimate += piece.error_estimate;
        acc.evaluations += piece.evaluations;
        acc.converged &= piece.converged;
        scale = acc.value.abs();
        cut = next;
        if !cut.is_finite() {
            break;
        }
    }
    acc.error_estimate += tail(cut);
    acc.converged = acc.converged && acc.error_estimate <= spec.target(acc.value).max(spec.abs_tol);
    acc
}

/// One term of a nonnegative series together with a bound on the sum of all
/// later terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTerm {
    pub value: f64,
    pub tail_bound: f64,
}

pub const MAX_SERIES_TERMS: usize = 100_000;

/// Sum `next(0), next(1), ...` until the supplied tail bound certifies the
/// remainder. `evaluations` records the number of terms used.
pub fn sum_series<F: FnMut(usize) -> SeriesTerm>(mut next: F, spec: &QuadratureSpec) -> IntegralResult {
    let mut partial = 0.0;
    for k in 0..MAX_SERIES_TERMS {
        let term = next(k);
        partial += term.value;
        if term.tail_bound <= spec.target(partial) {
            return IntegralResult {
                value: partial,
                error_estimate: term.tail_bound,
                evaluations: k + 1,
                converged: true,
            };
        }
    }
    IntegralResult {
        value: partial,
        error_estimate: f64::INFINITY,
        evaluations: MAX_SERIES_TERMS,
        converged: false,
    }
}

/// Tail bound for a series whose term ratios are nonincreasing: after a term
/// `current` that followed `previous`, the remainder is at most
/// `current * q / (1 - q)` with `q = current / previous`.
pub fn geometric_tail(previous: f64, current: f64) -> f64 {
    if current == 0.0 {
        return 0.0;
    }
    let q = current / previous;
    if q.is_finite() && q < 1.0 {
        current * q / (1.0 - q)
    } else {
        f64::INFINITY
    }
}
