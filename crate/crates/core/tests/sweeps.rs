use bergman_lab::config::{execute, RunConfig, SweepResult};
use bergman_lab::doubling::find_sigma;
use bergman_lab::kernel::{ApproachRegion, SlicingConfig};
use bergman_lab::profile::{log_grid, RadialProfile};
use bergman_lab::report::{render_svg, summary_json, sweep_csv, sweep_plot};
use bergman_lab::verify::{
    monotone_blow_up, sweep_kernel_band, sweep_sandwich, BandCriteria, BandRow, Lab, SandwichOptions, SweepSpec, ZPath,
};

fn lab() -> Lab {
    let f = RadialProfile::exp_inverse(1.0).unwrap();
    let cert = find_sigma(&f.lambda(), 0.4, 1e6).unwrap().into_certificate().unwrap();
    Lab::new(f, SlicingConfig::default(), Some(cert))
}

fn spec(points: usize, z_path: ZPath) -> SweepSpec {
    SweepSpec {
        region: ApproachRegion::new(1.0, 2).unwrap(),
        t_min: 1e-6,
        t_max: 1e-2,
        points,
        z_path,
    }
}

#[test]
fn refining_the_grid_keeps_the_band() {
    let lab = lab();
    for path in [ZPath::Origin, ZPath::RegionEdge(0.5)] {
        // 29 points contain the 15
        let coarse = sweep_kernel_band(&lab, "coarse", &spec(15, path), &BandCriteria::default()).unwrap();
        let fine = sweep_kernel_band(&lab, "fine", &spec(29, path), &BandCriteria::default()).unwrap();
        let allowance = fine.rows.iter().map(|r| r.error / r.measured).fold(0.0, f64::max);
        let (bc, bf) = (coarse.c_hi / coarse.c_lo, fine.c_hi / fine.c_lo);
        assert!(bf >= bc * (1.0 - 2.0 * allowance), "{path:?}");
        assert!(bf <= bc * (1.0 + 2.0 * allowance), "{path:?}: {bc} -> {bf}");
    }
}

#[test]
fn edge_path_sits_inside_the_region() {
    let lab = lab();
    let s = spec(12, ZPath::RegionEdge(0.5));
    let rep = sweep_kernel_band(&lab, "edge", &s, &BandCriteria::default()).unwrap();
    for row in &rep.rows {
        assert_eq!(row.z_abs, 0.5 * s.region.radius(row.t));
        assert!(row.excluded.is_empty());
    }
}

#[test]
fn too_wide_a_region_is_vacuous() {
    let s = SweepSpec {
        region: ApproachRegion::new(5.0, 8).unwrap(),
        ..spec(10, ZPath::RegionEdge(0.5))
    };
    let rep = sweep_kernel_band(&lab(), "wide", &s, &BandCriteria::default()).unwrap();
    assert!(rep.vacuous);
    assert_eq!(rep.used, 0);
    assert_eq!(rep.excluded, 10);
    assert_eq!(rep.verdict(), "vacuous");
}

#[test]
fn oversized_bidisc_is_caught() {
    let opts = SandwichOptions {
        c_override: Some(4.0),
        lower_only: false,
    };
    let rep = sweep_sandwich(&lab(), "inject", &spec(10, ZPath::Origin), &opts).unwrap();
    assert!(!rep.pass);
    assert_eq!(rep.upper_violations, rep.used);
    assert!(rep.rows.iter().all(|r| !r.note.is_empty()));
}

fn rows(points: &[(f64, f64)]) -> Vec<BandRow> {
    points
        .iter()
        .map(|&(t, ratio)| BandRow {
            t,
            z_abs: 0.0,
            measured: ratio,
            error: 0.0,
            envelope: 1.0,
            ratio,
            excluded: String::new(),
        })
        .collect()
}

#[test]
fn slow_decay_is_flagged() {
    // R_t^{2n+2} / sqrt(t) is unbounded as t -> 0
    let f = RadialProfile::exp_inverse(1.0).unwrap();
    for n in [0, 1] {
        let pts: Vec<(f64, f64)> = log_grid(1e-60, 1e-4, 25)
            .into_iter()
            .map(|t| (t, f.f_inverse(t).unwrap().powi(2 * n + 2) / t.sqrt()))
            .collect();
        assert!(monotone_blow_up(&rows(&pts)), "n = {n}");
    }
}

#[test]
fn saturation_is_not_blow_up() {
    let pts: Vec<(f64, f64)> = log_grid(1e-60, 1e-4, 25)
        .into_iter()
        .map(|t| (t, 0.25 - 1.0 / (1.0 / t).ln()))
        .collect();
    assert!(!monotone_blow_up(&rows(&pts)));
}

const SMALL_RUN: &str = r#"{
  "schema_version": 1,
  "profile": { "family": "exp_inverse", "p": 1.0 },
  "band": { "band_limit": 1e3 },
  "sweeps": [
    { "kind": "kernel", "name": "k", "grid": { "region": { "alpha": 1.0, "N": 2 }, "t_min": 1e-5, "t_max": 1e-2, "points": 8, "z_path": "origin" } },
    { "kind": "sandwich", "name": "s", "grid": { "region": { "alpha": 1.0, "N": 2 }, "t_min": 1e-5, "t_max": 1e-2, "points": 8, "z_path": { "region_edge": 0.5 } }, "options": { "lower_only": false } },
    { "kind": "lemma", "name": "l", "lemma": { "lemma": "alt", "n": 1 }, "t_min": 1e-40, "points": 10 }
  ],
  "output_dir": "unused"
}"#;

#[test]
fn pipeline_is_deterministic() {
    let cfg = RunConfig::from_json(SMALL_RUN).unwrap();
    let a = execute(&cfg).unwrap();
    let b = execute(&cfg).unwrap();
    assert!(a.all_passed);
    assert_eq!(summary_json(&a).unwrap(), summary_json(&b).unwrap());
    for (x, y) in a.sweeps.iter().zip(&b.sweeps) {
        assert_eq!(sweep_csv(x).unwrap(), sweep_csv(y).unwrap());
        let svg = render_svg(&sweep_plot(x).unwrap()).unwrap();
        assert_eq!(svg, render_svg(&sweep_plot(y).unwrap()).unwrap());
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    }
    assert!(matches!(a.sweeps[2].result, SweepResult::Lemma(_)));
}
