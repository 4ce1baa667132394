//! Browser bindings: each entry point returns a JSON document of curves for
//! the page in `www/` to draw. All of them also run natively.

use bergman_lab::doubling::find_sigma;
use bergman_lab::kernel::{ApproachRegion, SlicingConfig};
use bergman_lab::profile::{log_grid, ProfileSpec, RadialProfile};
use bergman_lab::verify::{sweep_kernel_band, sweep_metric_band, BandCriteria, BandReport, Lab, SweepSpec, ZPath};
use num_complex::Complex64;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const R: f64 = 0.4;
const SIGMA_MAX: f64 = 1e6;
const MAX_POINTS: usize = 200;

#[derive(Serialize)]
struct Curve {
    label: String,
    x: Vec<f64>,
    y: Vec<f64>,
    dashed: bool,
}

#[derive(Serialize)]
struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    log_x: bool,
    log_y: bool,
    curves: Vec<Curve>,
    notes: Vec<String>,
}

/// `param` is `p` for `exp_inverse` and `M` for `monomial`.
fn profile(family: &str, param: f64) -> Result<RadialProfile, String> {
    let mut spec = ProfileSpec::exp_inverse(param);
    spec.family = family.to_string();
    if family == "monomial" {
        spec.m = Some(param.round().max(1.0) as u32);
    }
    spec.build().map_err(|e| e.to_string())
}

fn lab(profile: RadialProfile) -> Result<(Lab, f64), String> {
    let cert = find_sigma(&profile.lambda(), R, SIGMA_MAX)
        .map_err(|e| e.to_string())?
        .into_certificate()
        .map_err(|e| e.to_string())?;
    let sigma = cert.sigma;
    Ok((Lab::new(profile, SlicingConfig::default(), Some(cert)), sigma))
}

fn check_grid(t_min: f64, t_max: f64, points: usize) -> Result<(), String> {
    if !(t_min > 0.0 && t_max > t_min && t_max < 1.0) {
        return Err(format!("need 0 < t_min < t_max < 1 (got {t_min}, {t_max})"));
    }
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(format!("points must lie in 2..={MAX_POINTS}"));
    }
    Ok(())
}

fn to_json(chart: &Chart) -> Result<String, String> {
    serde_json::to_string(chart).map_err(|e| e.to_string())
}

/// Measured values of a band report with the two envelope multiples.
fn band_curves(rep: &BandReport, label: &str) -> Vec<Curve> {
    let used: Vec<_> = rep.rows.iter().filter(|r| r.excluded.is_empty()).collect();
    let x: Vec<f64> = used.iter().map(|r| r.t).collect();
    let env = |c: f64| used.iter().map(|r| c * r.envelope).collect::<Vec<_>>();
    vec![
        Curve {
            label: label.to_string(),
            x: x.clone(),
            y: used.iter().map(|r| r.measured).collect(),
            dashed: false,
        },
        Curve {
            label: format!("{:.3} x envelope", rep.c_lo),
            x: x.clone(),
            y: env(rep.c_lo),
            dashed: true,
        },
        Curve {
            label: format!("{:.3} x envelope", rep.c_hi),
            x,
            y: env(rep.c_hi),
            dashed: true,
        },
    ]
}

fn band_note(rep: &BandReport) -> String {
    if rep.vacuous {
        return format!("{}: no sweep point lies in the approach region", rep.name);
    }
    format!(
        "{}: band {:.3}, slope {:.3}, {} used, {} excluded, {}",
        rep.name,
        rep.c_hi / rep.c_lo,
        rep.slope,
        rep.used,
        rep.excluded,
        rep.verdict()
    )
}

/// `f`, `Lambda` and `G` on a log grid of `(x_min, 0.45)`.
#[wasm_bindgen]
pub fn profile_curves(family: &str, param: f64, x_min: f64, points: usize) -> Result<String, String> {
    check_grid(x_min, 0.45, points)?;
    let f = profile(family, param)?;
    let view = f.lambda();
    let xs = log_grid(x_min, 0.45, points);
    let mut curves = vec![
        Curve {
            label: "-log f(x)".into(),
            x: xs.clone(),
            y: xs.iter().map(|&x| -f.log_f(x)).collect(),
            dashed: false,
        },
        Curve {
            label: "Lambda(x)".into(),
            x: xs.clone(),
            y: xs.iter().map(|&x| view.lambda(x).unwrap_or(f64::NAN)).collect(),
            dashed: false,
        },
    ];
    let ts: Vec<f64> = curves[1].y.iter().copied().filter(|y| *y > 0.0).collect();
    if let (Some(&lo), Some(&hi)) = (ts.first(), ts.last()) {
        let grid = log_grid(lo, hi, points);
        curves.push(Curve {
            label: "G(2t) / G(t) at x = G(t)".into(),
            x: grid.iter().map(|&t| view.g_inverse(t).unwrap_or(f64::NAN)).collect(),
            y: grid
                .iter()
                .map(|&t| match (view.g_inverse(2.0 * t), view.g_inverse(t)) {
                    (Ok(a), Ok(b)) if b > 0.0 => a / b,
                    _ => f64::NAN,
                })
                .collect(),
            dashed: true,
        });
    }
    let notes = match find_sigma(&view, R, SIGMA_MAX)
        .map_err(|e| e.to_string())?
        .certificate()
    {
        Some(c) => vec![format!("doubling certified: sigma = {:.4}, T = {:.3e}", c.sigma, c.t)],
        None => vec![format!("not doubling up to sigma = {SIGMA_MAX:e}")],
    };
    to_json(&Chart {
        title: f.name(),
        x_label: "x".into(),
        y_label: "value".into(),
        log_x: true,
        log_y: true,
        curves,
        notes,
    })
}

/// Diagonal kernel along a sweep against `(t f^{-1}(t))^{-2}`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn kernel_band(
    family: &str,
    param: f64,
    alpha: f64,
    n: u32,
    edge_fraction: f64,
    t_min: f64,
    t_max: f64,
    points: usize,
) -> Result<String, String> {
    check_grid(t_min, t_max, points)?;
    let (lab, sigma) = lab(profile(family, param)?)?;
    let spec = SweepSpec {
        region: ApproachRegion::new(alpha, n).map_err(|e| e.to_string())?,
        t_min,
        t_max,
        points,
        z_path: if edge_fraction > 0.0 {
            ZPath::RegionEdge(edge_fraction)
        } else {
            ZPath::Origin
        },
    };
    let rep = sweep_kernel_band(&lab, "kernel", &spec, &BandCriteria::default()).map_err(|e| e.to_string())?;
    to_json(&Chart {
        title: format!("K(z, it) on {}", lab.profile().name()),
        x_label: "t".into(),
        y_label: "K".into(),
        log_x: true,
        log_y: true,
        curves: band_curves(&rep, "K_ref"),
        notes: vec![format!("sigma = {sigma:.4}"), band_note(&rep)],
    })
}

/// Metric lengths of `(0, 1)` and `(1, 0)` at `(0, it)`.
#[wasm_bindgen]
pub fn metric_growth(family: &str, param: f64, t_min: f64, t_max: f64, points: usize) -> Result<String, String> {
    check_grid(t_min, t_max, points)?;
    let (lab, _) = lab(profile(family, param)?)?;
    let spec = SweepSpec {
        region: ApproachRegion::new(1.0, 2).map_err(|e| e.to_string())?,
        t_min,
        t_max,
        points,
        z_path: ZPath::Origin,
    };
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let reps = sweep_metric_band(
        &lab,
        "metric",
        &spec,
        &[(zero, one), (one, zero)],
        &BandCriteria::default(),
    )
    .map_err(|e| e.to_string())?;
    let mut curves = band_curves(&reps[0], "g22");
    curves.extend(band_curves(&reps[1], "g11"));
    to_json(&Chart {
        title: format!("Bergman metric at z = 0 on {}", lab.profile().name()),
        x_label: "t".into(),
        y_label: "squared length".into(),
        log_x: true,
        log_y: true,
        curves,
        notes: reps.iter().map(band_note).collect(),
    })
}
