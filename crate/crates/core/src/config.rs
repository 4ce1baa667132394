//! Versioned JSON run configuration and the pipeline it drives:
//! profile validation, doubling search, then the listed sweeps.

use crate::certificates::{r0, R0Report};
use crate::doubling::{find_sigma, DoublingOutcome, DEFAULT_SIGMA_MAX};
use crate::error::{LabError, Result};
use crate::kernel::SlicingConfig;
use crate::profile::{log_grid, ProfileSpec, ValidationReport};
use crate::verify::{
    lemma_sweep, sweep_kernel_band, sweep_metric_band, sweep_sandwich, BandCriteria, BandReport, Lab, LemmaKind,
    LemmaReport, SandwichOptions, SandwichReport, SweepSpec,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_R: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub profile: ProfileSpec,
    #[serde(default)]
    pub doubling: DoublingParams,
    #[serde(default)]
    pub slicing: SlicingConfig,
    #[serde(default)]
    pub band: BandCriteria,
    #[serde(default = "yes")]
    pub validate_profile: bool,
    #[serde(default)]
    pub sweeps: Vec<SweepTask>,
    pub output_dir: PathBuf,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
    #[serde(default)]
    pub parallelism: Parallelism,
}

fn yes() -> bool {
    true
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Svg]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoublingParams {
    #[serde(rename = "R")]
    pub r: f64,
    pub sigma_max: f64,
}

impl Default for DoublingParams {
    fn default() -> Self {
        Self {
            r: DEFAULT_R,
            sigma_max: DEFAULT_SIGMA_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(untagged)]
pub enum Parallelism {
    Threads(usize),
    #[default]
    #[serde(with = "auto")]
    Auto,
}

mod auto {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(de::Error::custom(format!(
                "parallelism must be a thread count or \"auto\", got {s:?}"
            )))
        }
    }
}

impl Parallelism {
    /// Thread count, `None` for the runtime default.
    pub fn threads(self) -> Option<usize> {
        match self {
            Parallelism::Threads(n) if n > 0 => Some(n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepTask {
    Kernel {
        name: String,
        grid: SweepSpec,
        #[serde(default)]
        k_max: Option<usize>,
    },
    Metric {
        name: String,
        grid: SweepSpec,
        directions: Vec<(Complex64, Complex64)>,
        #[serde(default)]
        k_max: Option<usize>,
    },
    Sandwich {
        name: String,
        grid: SweepSpec,
        #[serde(default)]
        options: SandwichOptions,
        #[serde(default)]
        k_max: Option<usize>,
    },
    /// Lemma-shape ratios; `t_max` defaults to `r0`.
    Lemma {
        name: String,
        lemma: LemmaKind,
        t_min: f64,
        #[serde(default)]
        t_max: Option<f64>,
        points: usize,
    },
}

impl SweepTask {
    pub fn name(&self) -> &str {
        match self {
            SweepTask::Kernel { name, .. }
            | SweepTask::Metric { name, .. }
            | SweepTask::Sandwich { name, .. }
            | SweepTask::Lemma { name, .. } => name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SweepTask::Kernel { .. } => "kernel",
            SweepTask::Metric { .. } => "metric",
            SweepTask::Sandwich { .. } => "sandwich",
            SweepTask::Lemma { .. } => "lemma",
        }
    }

    fn k_max(&self) -> Option<usize> {
        match self {
            SweepTask::Kernel { k_max, .. } | SweepTask::Metric { k_max, .. } | SweepTask::Sandwich { k_max, .. } => {
                *k_max
            }
            SweepTask::Lemma { .. } => None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(LabError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.sweeps.is_empty() && !self.validate_profile {
            return Err(LabError::Config(
                "nothing to do: no sweeps and validate_profile is false".into(),
            ));
        }
        let mut names: Vec<&str> = self.sweeps.iter().map(SweepTask::name).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(LabError::Config(format!("duplicate sweep name {:?}", w[0])));
        }
        for s in &self.sweeps {
            if s.name().is_empty()
                || !s
                    .name()
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(LabError::Config(format!(
                    "sweep name {:?} must be non-empty ASCII letters, digits, '_' or '-'",
                    s.name()
                )));
            }
            let check = match s {
                SweepTask::Kernel { grid, .. } | SweepTask::Sandwich { grid, .. } => grid.validate(),
                SweepTask::Metric { grid, directions, .. } => {
                    if directions.is_empty() {
                        Err(LabError::Config(format!(
                            "metric sweep {:?} has no directions",
                            s.name()
                        )))
                    } else {
                        grid.validate()
                    }
                }
                SweepTask::Lemma {
                    t_min, t_max, points, ..
                } => {
                    if !(*t_min > 0.0) || *points < 2 || t_max.is_some_and(|hi| !(hi > *t_min)) {
                        Err(LabError::Config(format!(
                            "lemma sweep {:?} needs 0 < t_min < t_max and 2+ points",
                            s.name()
                        )))
                    } else {
                        Ok(())
                    }
                }
            };
            check.map_err(|e| LabError::Config(format!("sweep {:?}: {e}", s.name())))?;
        }
        self.profile.build()?;
        Ok(())
    }

    pub fn sweep(&self, name: &str) -> Option<&SweepTask> {
        self.sweeps.iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum SweepResult {
    Band(BandReport),
    Metric {
        directions: Vec<BandReport>,
    },
    Sandwich(SandwichReport),
    Lemma(LemmaReport),
    /// The sweep could not run on this profile (no doubling certificate).
    Skipped {
        reason: String,
    },
}

impl SweepResult {
    pub fn pass(&self) -> bool {
        match self {
            SweepResult::Band(r) => r.pass,
            SweepResult::Metric { directions } => directions.iter().all(|r| r.pass),
            SweepResult::Sandwich(r) => r.pass,
            SweepResult::Lemma(r) => r.pass,
            SweepResult::Skipped { .. } => false,
        }
    }

    pub fn verdict(&self) -> &'static str {
        let vacuous = match self {
            SweepResult::Band(r) => r.vacuous,
            SweepResult::Metric { directions } => directions.iter().all(|r| r.vacuous),
            SweepResult::Sandwich(r) => r.vacuous,
            _ => false,
        };
        if !self.pass() {
            "fail"
        } else if vacuous {
            "vacuous"
        } else {
            "pass"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub name: String,
    pub kind: &'static str,
    pub verdict: &'static str,
    pub pass: bool,
    #[serde(flatten)]
    pub result: SweepResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub schema_version: u32,
    pub profile: String,
    pub validation: Option<ValidationReport>,
    pub doubling: DoublingOutcome,
    pub r0: Option<R0Report>,
    pub sweeps: Vec<SweepOutcome>,
    pub all_passed: bool,
}

/// Runs the configured pipeline. Failed verdicts are data; only execution
/// errors are `Err`.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    execute_filtered(cfg, None)
}

/// As `execute`, restricted to the sweep called `only` when given.
pub fn execute_filtered(cfg: &RunConfig, only: Option<&str>) -> Result<RunOutcome> {
    let profile = cfg.profile.build()?;
    let validation = if cfg.validate_profile {
        Some(profile.validate())
    } else {
        None
    };
    let view = profile.lambda();
    let doubling = find_sigma(&view, cfg.doubling.r, cfg.doubling.sigma_max)?;
    let cert = doubling.certificate().cloned();
    let r0_report = cert.as_ref().map(|c| r0(&profile, c)).transpose()?;

    let selected: Vec<&SweepTask> = match only {
        None => cfg.sweeps.iter().collect(),
        Some(name) => vec![cfg
            .sweep(name)
            .ok_or_else(|| LabError::Config(format!("no sweep named {name:?}")))?],
    };
    let base = Lab::new(profile.clone(), cfg.slicing.clone(), cert.clone());
    let mut sweeps = Vec::new();
    for task in selected {
        let own;
        let lab = match task.k_max() {
            Some(k) if k != cfg.slicing.k_max => {
                own = Lab::new(
                    profile.clone(),
                    SlicingConfig {
                        k_max: k,
                        ..cfg.slicing.clone()
                    },
                    cert.clone(),
                );
                &own
            }
            _ => &base,
        };
        let result = run_task(lab, task, &cfg.band, r0_report.as_ref());
        let result = match result {
            Err(LabError::NotDoubling { .. }) => SweepResult::Skipped {
                reason: format!(
                    "{} has no doubling certificate up to sigma = {}",
                    profile.name(),
                    cfg.doubling.sigma_max
                ),
            },
            other => other?,
        };
        sweeps.push(SweepOutcome {
            name: task.name().to_string(),
            kind: task.kind(),
            verdict: result.verdict(),
            pass: result.pass(),
            result,
        });
    }
    let all_passed = validation.as_ref().is_none_or(ValidationReport::all_passed)
        && doubling.certificate().is_some()
        && sweeps.iter().all(|s| s.pass);
    Ok(RunOutcome {
        schema_version: SCHEMA_VERSION,
        profile: profile.name(),
        validation,
        doubling,
        r0: r0_report,
        sweeps,
        all_passed,
    })
}

fn run_task(lab: &Lab, task: &SweepTask, band: &BandCriteria, r0_report: Option<&R0Report>) -> Result<SweepResult> {
    Ok(match task {
        SweepTask::Kernel { name, grid, .. } => SweepResult::Band(sweep_kernel_band(lab, name, grid, band)?),
        SweepTask::Metric {
            name, grid, directions, ..
        } => SweepResult::Metric {
            directions: sweep_metric_band(lab, name, grid, directions, band)?,
        },
        SweepTask::Sandwich {
            name, grid, options, ..
        } => SweepResult::Sandwich(sweep_sandwich(lab, name, grid, options)?),
        SweepTask::Lemma {
            name,
            lemma,
            t_min,
            t_max,
            points,
        } => {
            let hi = match (t_max, r0_report) {
                (Some(hi), _) => *hi,
                (None, Some(r)) => r.r0,
                (None, None) => return Err(LabError::NotDoubling { sigma_max: f64::NAN }),
            };
            if !(hi > *t_min) {
                return Err(LabError::Precondition(format!(
                    "lemma sweep {name:?}: t_max = {hi} is not above t_min = {t_min}"
                )));
            }
            let mut r = lemma_sweep(lab.profile(), *lemma, &log_grid(*t_min, hi, *points), band.band_limit)?;
            r.name = name.clone();
            SweepResult::Lemma(r)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "profile": {"family": "exp_inverse", "p": 1.0},
        "output_dir": "out"
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.doubling.r, DEFAULT_R);
        assert_eq!(c.formats.len(), 3);
        assert_eq!(c.parallelism, Parallelism::Auto);
        assert_eq!(c.slicing.k_max, 64);
        assert!(c.validate_profile);
    }

    #[test]
    fn parallelism_forms() {
        let p: Parallelism = serde_json::from_str("4").unwrap();
        assert_eq!(p.threads(), Some(4));
        let p: Parallelism = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(p.threads(), None);
        assert!(serde_json::from_str::<Parallelism>("\"many\"").is_err());
        assert_eq!(serde_json::to_string(&Parallelism::Auto).unwrap(), "\"auto\"");
    }

    #[test]
    fn unknown_field_reports_location() {
        let bad = MINIMAL.replace("\"output_dir\"", "\"outptu_dir\"");
        let e = RunConfig::from_json(&bad).unwrap_err().to_string();
        assert!(e.contains("outptu_dir") && e.contains("line"), "{e}");
    }

    #[test]
    fn sweep_round_trip() {
        let text = r#"{
            "schema_version": 1,
            "profile": {"family": "double_exp"},
            "output_dir": "o",
            "sweeps": [
              {"kind": "kernel", "name": "k", "grid": {"region": {"alpha": 1.0, "N": 2},
                "t_min": 1e-4, "t_max": 1e-2, "points": 5, "z_path": {"region_edge": 0.5}}},
              {"kind": "metric", "name": "m", "grid": {"region": {"alpha": 1.0, "N": 2},
                "t_min": 1e-4, "t_max": 1e-2, "points": 5, "z_path": "origin"},
                "directions": [[[1, 0], [0, 0]]]},
              {"kind": "lemma", "name": "l", "lemma": {"lemma": "psi", "alpha": 0, "beta": 2, "n": 1},
                "t_min": 1e-40, "points": 5}
            ]
        }"#;
        let c = RunConfig::from_json(text).unwrap();
        assert_eq!(c.sweeps.len(), 3);
        let again = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_configs() {
        let wrong_version = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(RunConfig::from_json(&wrong_version).is_err());
        let idle = MINIMAL.replace("\"output_dir\"", "\"validate_profile\": false, \"output_dir\"");
        assert!(RunConfig::from_json(&idle).is_err());
    }
}
