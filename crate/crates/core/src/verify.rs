//! Sweep harnesses: bounded-ratio band tests and sandwich checks along
//! `t -> 0` at points `(z(t), it)`.

use crate::certificates::{
    candidate_norm_sq, cut_radius, default_norm_spec, kernel_lower_certificate, reduced_integral, Candidate, DomainTag,
    ReducedKind,
};
use crate::doubling::DoublingCertificate;
use crate::error::{LabError, Result};
use crate::kernel::{ApproachRegion, InscribedBidisc, SlicingConfig, SlicingKernel};
use crate::metric::{metric_eval, metric_reference};
use crate::profile::{log_grid, RadialProfile};
use crate::quadrature::QuadratureSpec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BAND_LIMIT: f64 = 1e3;
pub const DEFAULT_SLOPE_TOL: f64 = 0.1;
/// Heights at or below this are where blow-up of a lemma ratio is looked for.
pub const BLOW_UP_REGIME: f64 = 1e-4;
/// Growth rate of `log ratio` against `log log(1/t)` over the deepest half
/// of the sweep above which a monotone ratio counts as blowing up.
pub const BLOW_UP_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZPath {
    Origin,
    /// `|z| = theta * alpha t^{1/N}`
    RegionEdge(f64),
    /// `|z|` fixed; no approach-region restriction.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub region: ApproachRegion,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    pub z_path: ZPath,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0) || !(self.t_max > self.t_min) {
            return Err(LabError::Precondition(format!(
                "sweep needs 0 < t_min < t_max (got {}, {})",
                self.t_min, self.t_max
            )));
        }
        if self.points < 2 {
            return Err(LabError::Precondition("sweep needs at least two points".into()));
        }
        match self.z_path {
            ZPath::RegionEdge(th) if !(th > 0.0 && th < 1.0) => {
                Err(LabError::Precondition(format!("edge fraction {th} is not in (0, 1)")))
            }
            ZPath::Fixed(r) if !(r >= 0.0) => Err(LabError::Precondition(format!("fixed |z| = {r} is negative"))),
            _ => Ok(()),
        }
    }

    pub fn heights(&self) -> Vec<f64> {
        log_grid(self.t_min, self.t_max, self.points)
    }

    pub fn z_abs(&self, t: f64) -> f64 {
        match self.z_path {
            ZPath::Origin => 0.0,
            ZPath::RegionEdge(th) => th * self.region.radius(t),
            ZPath::Fixed(r) => r,
        }
    }

    /// Why `(z(t), it)` is not a sweep point, if it is not.
    fn exclusion(&self, profile: &RadialProfile, t: f64) -> Option<&'static str> {
        let z = Complex64::new(self.z_abs(t), 0.0);
        let w = Complex64::new(0.0, t);
        if !(t.ln() > profile.log_f(z.re)) {
            return Some("outside domain");
        }
        if !matches!(self.z_path, ZPath::Fixed(_)) && !self.region.contains(profile, z, w) {
            return Some("outside approach region");
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandCriteria {
    pub band_limit: f64,
    pub slope_tol: f64,
}

impl Default for BandCriteria {
    fn default() -> Self {
        Self {
            band_limit: DEFAULT_BAND_LIMIT,
            slope_tol: DEFAULT_SLOPE_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandRow {
    pub t: f64,
    pub z_abs: f64,
    pub measured: f64,
    pub error: f64,
    pub envelope: f64,
    pub ratio: f64,
    /// Empty for rows that enter the band.
    pub excluded: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandReport {
    pub name: String,
    pub rows: Vec<BandRow>,
    pub c_lo: f64,
    pub c_hi: f64,
    /// Least-squares slope of `log measured` against `log envelope`.
    pub slope: f64,
    pub used: usize,
    pub excluded: usize,
    pub band_ok: bool,
    pub slope_ok: bool,
    /// No sweep point lies in the domain and approach region.
    pub vacuous: bool,
    pub pass: bool,
}

pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

impl BandReport {
    pub fn assemble(name: impl Into<String>, rows: Vec<BandRow>, criteria: &BandCriteria) -> Self {
        let used: Vec<&BandRow> = rows.iter().filter(|r| r.excluded.is_empty()).collect();
        let c_lo = used.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        let c_hi = used.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
        let xs: Vec<f64> = used.iter().map(|r| r.envelope).collect();
        let ys: Vec<f64> = used.iter().map(|r| r.measured).collect();
        let slope = log_log_slope(&xs, &ys);
        let vacuous = used.is_empty();
        let band_ok = !vacuous && c_lo > 0.0 && c_hi / c_lo <= criteria.band_limit;
        let slope_ok = (slope - 1.0).abs() <= criteria.slope_tol;
        let excluded = rows.len() - used.len();
        let used = used.len();
        Self {
            name: name.into(),
            rows,
            c_lo,
            c_hi,
            slope,
            used,
            excluded,
            band_ok,
            slope_ok,
            vacuous,
            pass: vacuous || (band_ok && slope_ok),
        }
    }

    pub fn verdict(&self) -> &'static str {
        if self.vacuous {
            "vacuous"
        } else if self.pass {
            "pass"
        } else {
            "fail"
        }
    }
}

/// Order-preserving map over sweep rows, parallel when the `parallel`
/// feature is on.
pub fn map_rows<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Profile, reference kernel and (when one exists) doubling certificate.
#[derive(Debug)]
pub struct Lab {
    pub kernel: SlicingKernel,
    pub cert: Option<DoublingCertificate>,
}

impl Lab {
    pub fn new(profile: RadialProfile, slicing: SlicingConfig, cert: Option<DoublingCertificate>) -> Self {
        Self {
            kernel: SlicingKernel::new(profile, slicing),
            cert,
        }
    }

    pub fn profile(&self) -> &RadialProfile {
        self.kernel.profile()
    }

    fn require_cert(&self) -> Result<&DoublingCertificate> {
        self.cert.as_ref().ok_or(LabError::NotDoubling { sigma_max: f64::NAN })
    }
}

fn row_or_exclusion<F>(lab: &Lab, spec: &SweepSpec, t: f64, measure: F) -> Result<BandRow>
where
    F: Fn(f64) -> Result<(f64, f64, f64, bool)>,
{
    let z_abs = spec.z_abs(t);
    let mut row = BandRow {
        t,
        z_abs,
        measured: f64::NAN,
        error: f64::NAN,
        envelope: f64::NAN,
        ratio: f64::NAN,
        excluded: String::new(),
    };
    if let Some(why) = spec.exclusion(lab.profile(), t) {
        row.excluded = why.into();
        return Ok(row);
    }
    let (measured, error, envelope, converged) = measure(z_abs)?;
    row.measured = measured;
    row.error = error;
    row.envelope = envelope;
    row.ratio = measured / envelope;
    if !converged {
        row.excluded = "unconverged".into();
    }
    Ok(row)
}

/// `K_ref(z(t), it)` against `t^{-2} f^{-1}(t)^{-2}`.
pub fn sweep_kernel_band(lab: &Lab, name: &str, spec: &SweepSpec, criteria: &BandCriteria) -> Result<BandReport> {
    spec.validate()?;
    lab.require_cert()?;
    let profile = lab.profile();
    let rows = map_rows(spec.heights(), |t| {
        row_or_exclusion(lab, spec, t, |z_abs| {
            let k = lab.kernel.kernel_diag(z_abs, t)?;
            let env = (t * profile.f_inverse(t)?).powi(-2);
            Ok((k.value, k.error, env, k.converged))
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BandReport::assemble(name, rows, criteria))
}

/// Metric length of `xi` against `f^{-1}(t)^{-2} |xi1|^2 + t^{-2} |xi2|^2`.
pub fn sweep_metric_band(
    lab: &Lab,
    name: &str,
    spec: &SweepSpec,
    directions: &[(Complex64, Complex64)],
    criteria: &BandCriteria,
) -> Result<Vec<BandReport>> {
    spec.validate()?;
    lab.require_cert()?;
    let profile = lab.profile();
    let forms = map_rows(
        spec.heights(),
        |t| -> Result<(f64, Option<crate::metric::MetricForm>)> {
            if spec.exclusion(profile, t).is_some() {
                return Ok((t, None));
            }
            Ok((t, Some(metric_reference(&lab.kernel, spec.z_abs(t), t)?)))
        },
    );
    let forms = forms.into_iter().collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    for (i, &xi) in directions.iter().enumerate() {
        let mut rows = Vec::new();
        for &(t, form) in &forms {
            let row = row_or_exclusion(lab, spec, t, |_| {
                let m = metric_eval(form.as_ref().expect("form exists for included rows"), xi);
                let env = profile.f_inverse(t)?.powi(-2) * xi.0.norm_sqr() + xi.1.norm_sqr() / (t * t);
                Ok((m, f64::NAN, env, true))
            })?;
            rows.push(row);
        }
        let label = format!("{name}[xi{i}=({}, {})]", fmt_c(xi.0), fmt_c(xi.1));
        reports.push(BandReport::assemble(label, rows, criteria));
    }
    Ok(reports)
}

fn fmt_c(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else {
        format!("{}{:+}i", c.re, c.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichRow {
    pub t: f64,
    pub z_abs: f64,
    pub lower: f64,
    pub lower_error: f64,
    pub reference: f64,
    pub reference_error: f64,
    /// `NaN` when no upper bound is checked.
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub excluded: String,
    /// Why the upper bound is missing, if it is.
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub name: String,
    pub rows: Vec<SandwichRow>,
    pub used: usize,
    pub excluded: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    pub vacuous: bool,
    pub pass: bool,
}

impl SandwichReport {
    fn assemble(name: impl Into<String>, rows: Vec<SandwichRow>) -> Self {
        let used: Vec<&SandwichRow> = rows.iter().filter(|r| r.excluded.is_empty()).collect();
        let lower_violations = used.iter().filter(|r| !r.lower_ok).count();
        let upper_violations = used.iter().filter(|r| !r.upper_ok).count();
        let vacuous = used.is_empty();
        let n_used = used.len();
        Self {
            name: name.into(),
            used: n_used,
            excluded: rows.len() - n_used,
            lower_violations,
            upper_violations,
            vacuous,
            pass: lower_violations == 0 && upper_violations == 0,
            rows,
        }
    }

    pub fn verdict(&self) -> &'static str {
        if self.vacuous {
            "vacuous"
        } else if self.pass {
            "pass"
        } else {
            "fail"
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SandwichOptions {
    /// Replace `c = 1/sigma`; for fault injection.
    pub c_override: Option<f64>,
    /// Check only the lower certificate.
    pub lower_only: bool,
}

/// `lower certificate <= K_ref <= inscribed-bidisc kernel` at every point.
pub fn sweep_sandwich(lab: &Lab, name: &str, spec: &SweepSpec, opts: &SandwichOptions) -> Result<SandwichReport> {
    spec.validate()?;
    let c = match (opts.lower_only, opts.c_override) {
        (true, _) => f64::NAN,
        (false, Some(c)) => c,
        (false, None) => lab.require_cert()?.c(),
    };
    let profile = lab.profile();
    let rows = map_rows(spec.heights(), |t| -> Result<SandwichRow> {
        let z_abs = spec.z_abs(t);
        let mut row = SandwichRow {
            t,
            z_abs,
            lower: f64::NAN,
            lower_error: f64::NAN,
            reference: f64::NAN,
            reference_error: f64::NAN,
            upper: f64::NAN,
            lower_ok: true,
            upper_ok: true,
            excluded: String::new(),
            note: String::new(),
        };
        if let Some(why) = spec.exclusion(profile, t) {
            row.excluded = why.into();
            return Ok(row);
        }
        let z = Complex64::new(z_abs, 0.0);
        let k = lab.kernel.kernel_diag(z_abs, t)?;
        let lower = kernel_lower_certificate(profile, z, t, DomainTag::FullDomain)?;
        row.reference = k.value;
        row.reference_error = k.error;
        row.lower = lower.lower_bound;
        row.lower_error = lower.error;
        row.lower_ok = lower.lower_bound <= k.value + k.error + lower.error;
        if !k.converged {
            row.excluded = "unconverged".into();
        }
        if !opts.lower_only {
            match InscribedBidisc::construct(profile, c, z, t) {
                Ok(b) => {
                    row.upper = b.kernel_at_center();
                    row.upper_ok = k.value - k.error <= row.upper;
                }
                Err(LabError::Geometry(why)) => {
                    row.upper_ok = false;
                    row.note = why;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(row)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SandwichReport::assemble(name, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "lemma", rename_all = "snake_case")]
pub enum LemmaKind {
    /// `||psi(.; alpha, beta, n, t, z)||^2` on the cut domain against
    /// `t^{2(beta-1)} f^{-1}(t)^{2(alpha+n+1)}`, with `|z| = f^{-1}(t)/2`.
    Psi { alpha: f64, beta: f64, n: u32 },
    /// `||phi(.; n, t)||^2` on the cut domain against `t^{2+2n} f^{-1}(t)^2`.
    Alt { n: u32 },
    /// `int_0^a r^{2n+1}/(t+f)^2 dr` against `t^{-2} R_t^{2n+2} + t^{-3/2}`.
    SplitChain { n: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub name: String,
    pub rows: Vec<BandRow>,
    pub c_lo: f64,
    pub c_hi: f64,
    /// Over `t <= 1e-4` the ratio increases strictly as `t` decreases and is
    /// still growing at the deep end (see `BLOW_UP_RATE`).
    pub blow_up: bool,
    pub pass: bool,
}

pub fn lemma_sweep(profile: &RadialProfile, kind: LemmaKind, heights: &[f64], band_limit: f64) -> Result<LemmaReport> {
    let spec = default_norm_spec();
    let a = cut_radius(profile)?;
    let rows = map_rows(heights.to_vec(), |t| -> Result<BandRow> {
        let r_t = profile.f_inverse(t)?;
        let (measured, error, envelope) = match kind {
            LemmaKind::Psi { alpha, beta, n } => {
                let z = Complex64::new(if alpha > 0.0 { 0.5 * r_t } else { 1.0 }, 0.0);
                let c = Candidate::Psi { alpha, beta, n, t, z };
                let nrm = candidate_norm_sq(&c, profile, DomainTag::BidiscCut, &spec)?;
                let env = t.powf(2.0 * (beta - 1.0)) * r_t.powf(2.0 * (alpha + f64::from(n) + 1.0));
                (nrm.norm_sq, nrm.error, env)
            }
            LemmaKind::Alt { n } => {
                let nrm = candidate_norm_sq(&Candidate::PhiAlt { n, t }, profile, DomainTag::BidiscCut, &spec)?;
                (nrm.norm_sq, nrm.error, t.powi(2 + 2 * n as i32) * r_t * r_t)
            }
            LemmaKind::SplitChain { n } => {
                let q = QuadratureSpec::with_rel_tol(1e-10);
                let ri = reduced_integral(profile, ReducedKind::Psi { n }, t, a, &q)?;
                let env = r_t.powi(2 * n as i32 + 2) / (t * t) + t.powf(-1.5);
                (ri.total.value, ri.total.error_estimate, env)
            }
        };
        Ok(BandRow {
            t,
            z_abs: f64::NAN,
            measured,
            error,
            envelope,
            ratio: measured / envelope,
            excluded: String::new(),
        })
    });
    let mut rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    rows.sort_by(|x, y| x.t.total_cmp(&y.t));
    let c_lo = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let c_hi = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let blow_up = monotone_blow_up(&rows);
    Ok(LemmaReport {
        name: format!("{kind:?}"),
        pass: c_lo > 0.0 && c_hi / c_lo <= band_limit && !blow_up,
        rows,
        c_lo,
        c_hi,
        blow_up,
    })
}

/// `rows` sorted by increasing `t`. A ratio that saturates has a vanishing
/// late growth rate, while power or polylogarithmic growth keeps it positive.
pub fn monotone_blow_up(rows: &[BandRow]) -> bool {
    let deep: Vec<(f64, f64)> = rows
        .iter()
        .rev()
        .filter(|r| r.t <= BLOW_UP_REGIME)
        .map(|r| ((1.0 / r.t).ln().ln(), r.ratio.ln()))
        .collect();
    if deep.len() < 3 || !deep.windows(2).all(|w| w[1].1 > w[0].1) {
        return false;
    }
    let mid = deep[deep.len() / 2];
    let last = deep[deep.len() - 1];
    (last.1 - mid.1) / (last.0 - mid.0) > BLOW_UP_RATE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = (1..10).map(|i| f64::from(i)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(1.7)).collect();
        assert!((log_log_slope(&x, &y) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn empty_sweep_rejected() {
        let spec = SweepSpec {
            region: ApproachRegion::new(1.0, 2).unwrap(),
            t_min: 1e-3,
            t_max: 1e-3,
            points: 10,
            z_path: ZPath::Origin,
        };
        assert!(matches!(spec.validate(), Err(LabError::Precondition(_))));
    }

    #[test]
    fn edge_path_radius() {
        let spec = SweepSpec {
            region: ApproachRegion::new(1.0, 2).unwrap(),
            t_min: 1e-6,
            t_max: 1e-2,
            points: 5,
            z_path: ZPath::RegionEdge(0.5),
        };
        for t in spec.heights() {
            assert!((spec.z_abs(t) - 0.5 * t.sqrt()).abs() < 1e-15);
        }
    }

    fn rows_from(ts: &[f64], ratio: impl Fn(f64) -> f64) -> Vec<BandRow> {
        ts.iter()
            .map(|&t| BandRow {
                t,
                z_abs: 0.0,
                measured: ratio(t),
                error: 0.0,
                envelope: 1.0,
                ratio: ratio(t),
                excluded: String::new(),
            })
            .collect()
    }

    #[test]
    fn blow_up_detection() {
        let ts = log_grid(1e-60, 1e-6, 25);
        let log_inv = |t: f64| (1.0 / t).ln();
        assert!(monotone_blow_up(&rows_from(&ts, |t| t.powf(-0.01))));
        assert!(monotone_blow_up(&rows_from(&ts, |t| log_inv(t).sqrt())));
        assert!(!monotone_blow_up(
            &rows_from(&ts, |t| 0.25 / (1.0 + 1e6 / log_inv(t).powi(4)))
        ));
        assert!(!monotone_blow_up(&rows_from(&ts, |_| 1.0)));
    }

    #[test]
    fn siegel_band_is_flat() {
        let lab = Lab::new(RadialProfile::quadratic_pure(), SlicingConfig::default(), None);
        let rows: Vec<BandRow> = log_grid(0.01, 1.0, 8)
            .into_iter()
            .map(|t| {
                let k = lab.kernel.kernel_diag(0.0, t).unwrap();
                let env = t.powi(-3);
                BandRow {
                    t,
                    z_abs: 0.0,
                    measured: k.value,
                    error: k.error,
                    envelope: env,
                    ratio: k.value / env,
                    excluded: String::new(),
                }
            })
            .collect();
        let r = BandReport::assemble("siegel", rows, &BandCriteria::default());
        assert!((r.slope - 1.0).abs() < 1e-8);
        assert!(r.c_hi / r.c_lo < 1.0 + 1e-8);
        assert!(r.pass);
    }
}
