//! Run artifacts: one headered CSV and one log-log SVG per sweep, plus a
//! JSON summary.

use crate::config::{Format, RunOutcome, SweepOutcome, SweepResult};
use crate::error::{LabError, Result};
use crate::verify::{BandReport, BandRow, LemmaReport, SandwichReport};
use plotters::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

pub const SUMMARY_FILE: &str = "summary.json";

pub fn summary_json(outcome: &RunOutcome) -> Result<String> {
    let mut s = serde_json::to_string_pretty(outcome)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct MetricCsvRow<'a> {
    direction: &'a str,
    t: f64,
    z_abs: f64,
    measured: f64,
    envelope: f64,
    ratio: f64,
    excluded: &'a str,
}

fn csv_string<F>(fill: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    fill(&mut w)?;
    let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error().to_string()))?;
    String::from_utf8(bytes).map_err(|e| LabError::Numerical(e.to_string()))
}

fn rows_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    csv_string(|w| {
        for r in rows {
            w.serialize(r)?;
        }
        Ok(())
    })
}

/// CSV text for one sweep, one row per height (per direction for metric
/// sweeps). `None` when the sweep produced no rows.
pub fn sweep_csv(sweep: &SweepOutcome) -> Result<Option<String>> {
    Ok(Some(match &sweep.result {
        SweepResult::Band(r) => rows_csv(&r.rows)?,
        SweepResult::Sandwich(r) => rows_csv(&r.rows)?,
        SweepResult::Lemma(r) => rows_csv(&r.rows)?,
        SweepResult::Metric { directions } => csv_string(|w| {
            for d in directions {
                let label = direction_label(&d.name);
                for r in &d.rows {
                    w.serialize(MetricCsvRow {
                        direction: label,
                        t: r.t,
                        z_abs: r.z_abs,
                        measured: r.measured,
                        envelope: r.envelope,
                        ratio: r.ratio,
                        excluded: &r.excluded,
                    })?;
                }
            }
            Ok(())
        })?,
        SweepResult::Skipped { .. } => return Ok(None),
    }))
}

fn direction_label(report_name: &str) -> &str {
    report_name
        .find('[')
        .map_or(report_name, |i| report_name[i + 1..].trim_end_matches(']'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineStyle {
    Solid,
    Dashed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: LineStyle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Shown in place of curves when every series is empty.
    pub empty_note: String,
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

fn positive_range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = vals
        .filter(|v| v.is_finite() && *v > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    // pad by a quarter decade; widen degenerate ranges
    let (lo, hi) = if hi / lo < 1.01 { (lo / 2.0, hi * 2.0) } else { (lo, hi) };
    Some((lo / 10f64.powf(0.25), hi * 10f64.powf(0.25)))
}

fn tick(v: &f64) -> String {
    format!("{v:.0e}")
}

fn plot_err<E: std::fmt::Display>(e: E) -> LabError {
    LabError::Numerical(format!("plot rendering: {e}"))
}

/// Self-contained log-log SVG.
pub fn render_svg(plot: &Plot) -> Result<String> {
    let finite = |s: &Series| -> Vec<(f64, f64)> {
        s.points
            .iter()
            .copied()
            .filter(|&(x, y)| x.is_finite() && x > 0.0 && y.is_finite() && y > 0.0)
            .collect()
    };
    let cleaned: Vec<(usize, &Series, Vec<(f64, f64)>)> =
        plot.series.iter().enumerate().map(|(i, s)| (i, s, finite(s))).collect();
    let xr = positive_range(cleaned.iter().flat_map(|c| c.2.iter().map(|p| p.0))).unwrap_or((1e-6, 1e-2));
    let yr = positive_range(cleaned.iter().flat_map(|c| c.2.iter().map(|p| p.1))).unwrap_or((1.0, 10.0));
    let any = cleaned.iter().any(|c| !c.2.is_empty());

    let mut out = String::new();
    {
        let root = SVGBackend::with_string(&mut out, (720, 460)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(&plot.title, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(42)
            .y_label_area_size(70)
            .build_cartesian_2d((xr.0..xr.1).log_scale(), (yr.0..yr.1).log_scale())
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(plot.x_label.as_str())
            .y_desc(plot.y_label.as_str())
            .x_label_formatter(&tick)
            .y_label_formatter(&tick)
            .draw()
            .map_err(plot_err)?;
        for (i, s, pts) in &cleaned {
            if pts.is_empty() {
                continue;
            }
            let color = PALETTE[i % PALETTE.len()];
            let anno = match s.style {
                LineStyle::Solid => chart
                    .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
                    .map_err(plot_err)?,
                LineStyle::Dashed => chart
                    .draw_series(DashedLineSeries::new(pts.clone(), 6, 4, color.stroke_width(1)))
                    .map_err(plot_err)?,
            };
            anno.label(s.label.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        if any {
            chart
                .configure_series_labels()
                .position(SeriesLabelPosition::UpperRight)
                .background_style(WHITE.mix(0.85))
                .border_style(BLACK)
                .draw()
                .map_err(plot_err)?;
        } else {
            root.draw(&Text::new(
                plot.empty_note.clone(),
                (200, 220),
                ("sans-serif", 16).into_font().color(&BLACK),
            ))
            .map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }
    Ok(out)
}

fn used(rows: &[BandRow]) -> impl Iterator<Item = &BandRow> {
    rows.iter().filter(|r| r.excluded.is_empty())
}

/// Measured curve plus the envelope scaled by the band's extreme constants.
fn band_series(r: &BandReport, prefix: &str) -> Vec<Series> {
    let measured = used(&r.rows).map(|row| (row.t, row.measured)).collect();
    let scaled = |c: f64| used(&r.rows).map(|row| (row.t, c * row.envelope)).collect();
    vec![
        Series {
            label: format!("{prefix}measured"),
            points: measured,
            style: LineStyle::Solid,
        },
        Series {
            label: format!("{prefix}c_lo x envelope"),
            points: scaled(r.c_lo),
            style: LineStyle::Dashed,
        },
        Series {
            label: format!("{prefix}c_hi x envelope"),
            points: scaled(r.c_hi),
            style: LineStyle::Dashed,
        },
    ]
}

fn sandwich_series(r: &SandwichReport) -> Vec<Series> {
    let pick = |f: fn(&crate::verify::SandwichRow) -> f64| {
        r.rows
            .iter()
            .filter(|row| row.excluded.is_empty())
            .map(|row| (row.t, f(row)))
            .collect()
    };
    vec![
        Series {
            label: "lower certificate".into(),
            points: pick(|row| row.lower),
            style: LineStyle::Dashed,
        },
        Series {
            label: "reference kernel".into(),
            points: pick(|row| row.reference),
            style: LineStyle::Solid,
        },
        Series {
            label: "inscribed bidisc".into(),
            points: pick(|row| row.upper),
            style: LineStyle::Dashed,
        },
    ]
}

fn lemma_series(r: &LemmaReport) -> Vec<Series> {
    vec![Series {
        label: "norm / envelope".into(),
        points: r.rows.iter().map(|row| (row.t, row.ratio)).collect(),
        style: LineStyle::Solid,
    }]
}

pub fn sweep_plot(sweep: &SweepOutcome) -> Option<Plot> {
    let (y_label, series) = match &sweep.result {
        SweepResult::Band(r) => ("K(z, it)", band_series(r, "")),
        SweepResult::Metric { directions } => (
            "metric length",
            directions
                .iter()
                .flat_map(|d| band_series(d, &format!("{} ", direction_label(&d.name))))
                .collect(),
        ),
        SweepResult::Sandwich(r) => ("kernel bounds", sandwich_series(r)),
        SweepResult::Lemma(r) => ("ratio", lemma_series(r)),
        SweepResult::Skipped { .. } => return None,
    };
    Some(Plot {
        title: format!("{} ({}, {})", sweep.name, sweep.kind, sweep.verdict),
        x_label: "t = Im w".into(),
        y_label: y_label.into(),
        series,
        empty_note: "no sweep point lies in the domain and approach region".into(),
    })
}

/// Writes the summary (always) and the per-sweep CSV/SVG files selected by
/// `formats`; returns the files written.
pub fn write_artifacts(outcome: &RunOutcome, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: &str| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put(SUMMARY_FILE.into(), &summary_json(outcome)?)?;
    for s in &outcome.sweeps {
        if formats.contains(&Format::Csv) {
            if let Some(text) = sweep_csv(s)? {
                put(format!("{}.csv", s.name), &text)?;
            }
        }
        if formats.contains(&Format::Svg) {
            if let Some(p) = sweep_plot(s) {
                put(format!("{}.svg", s.name), &render_svg(&p)?)?;
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_self_contained() {
        let plot = Plot {
            title: "power law".into(),
            x_label: "t".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "t^-2".into(),
                points: (1..20).map(|i| (1e-6 * 1.5f64.powi(i), 1.5f64.powi(-2 * i))).collect(),
                style: LineStyle::Solid,
            }],
            empty_note: String::new(),
        };
        let svg = render_svg(&plot).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("href"));
        assert_eq!(svg, render_svg(&plot).unwrap());
    }

    #[test]
    fn empty_plot_renders_note() {
        let plot = Plot {
            title: "nothing".into(),
            x_label: "t".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "none".into(),
                points: vec![(1e-3, f64::NAN)],
                style: LineStyle::Solid,
            }],
            empty_note: "empty sweep".into(),
        };
        assert!(render_svg(&plot).unwrap().contains("empty sweep"));
    }

    #[test]
    fn csv_quotes_fields() {
        let rows = vec![BandRow {
            t: 1e-3,
            z_abs: 0.0,
            measured: 2.0,
            error: 0.0,
            envelope: 1.0,
            ratio: 2.0,
            excluded: "a, \"b\"".into(),
        }];
        let text = rows_csv(&rows).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,z_abs,measured,error,envelope,ratio,excluded");
        assert!(lines.next().unwrap().ends_with("\"a, \"\"b\"\"\""));
    }

    #[test]
    fn direction_labels() {
        assert_eq!(direction_label("m[xi0=(1, 0)]"), "xi0=(1, 0)");
        assert_eq!(direction_label("plain"), "plain");
    }
}
