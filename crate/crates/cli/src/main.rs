use bergman_lab::config::{execute_filtered, RunConfig, DEFAULT_R};
use bergman_lab::doubling::{find_sigma, DoublingOutcome, DEFAULT_SIGMA_MAX};
use bergman_lab::kernel::{SlicingConfig, SlicingKernel};
use bergman_lab::metric::metric_reference;
use bergman_lab::profile::{ProfileSpec, RadialProfile};
use bergman_lab::report::write_artifacts;
use bergman_lab::LabError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

const THREADS_ENV: &str = "BERGMAN_LAB_THREADS";

#[derive(Parser)]
#[command(
    name = "bergman-lab",
    version,
    about = "Bergman kernel and metric growth on radial model domains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task in a JSON config and write its artifacts.
    Run { config: PathBuf },
    /// Run a single named sweep from a JSON config.
    Sweep { config: PathBuf, name: String },
    /// Check the structural hypotheses on a profile.
    ProfileValidate(ProfileArgs),
    /// Search the sigma ladder for a doubling certificate.
    DoublingFind {
        #[command(flatten)]
        profile: ProfileArgs,
        #[arg(long = "R", default_value_t = DEFAULT_R)]
        r: f64,
        #[arg(long, default_value_t = DEFAULT_SIGMA_MAX)]
        sigma_max: f64,
    },
    /// Reference kernel on the diagonal at one point.
    KernelEval {
        #[command(flatten)]
        profile: ProfileArgs,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Bergman metric at one point.
    MetricEval {
        #[command(flatten)]
        profile: ProfileArgs,
        #[command(flatten)]
        point: PointArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Expinv,
    Doubleexp,
    Monomial,
    QuadraticPure,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long, value_enum)]
    profile: FamilyArg,
    /// Exponent of the exp-inverse family.
    #[arg(long)]
    p: Option<f64>,
    /// Order of the monomial family.
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    quartic: Option<f64>,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    z_abs: f64,
    #[arg(long)]
    im_w: f64,
    #[arg(long, default_value_t = SlicingConfig::default().k_max)]
    k_max: usize,
}

impl ProfileArgs {
    fn build(&self) -> Result<RadialProfile, LabError> {
        let family = match self.profile {
            FamilyArg::Expinv => "exp_inverse",
            FamilyArg::Doubleexp => "double_exp",
            FamilyArg::Monomial => "monomial",
            FamilyArg::QuadraticPure => "quadratic_pure",
        };
        let spec = ProfileSpec {
            family: family.into(),
            p: self.p.or(matches!(self.profile, FamilyArg::Expinv).then_some(1.0)),
            m: self.m.or(matches!(self.profile, FamilyArg::Monomial).then_some(1)),
            cutoff: self.cutoff.or(Some(0.5)),
            kappa: self.kappa,
            quartic: self.quartic,
        };
        spec.build()
    }
}

enum Failure {
    Verdict,
    Execution(LabError),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure::Execution(e)
    }
}

fn configure_threads(from_config: Option<usize>) -> Result<(), LabError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| LabError::Config(format!("{THREADS_ENV}={v:?} is not a positive integer")))?,
        ),
        Err(_) => from_config,
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), LabError> {
    let text = serde_json::to_string_pretty(value)?;
    // a closed pipe (`| head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn run_config(path: &PathBuf, only: Option<&str>) -> Result<(), Failure> {
    let cfg = RunConfig::load(path)?;
    configure_threads(cfg.parallelism.threads())?;
    let outcome = execute_filtered(&cfg, only)?;
    let files = write_artifacts(&outcome, &cfg.output_dir, &cfg.formats)?;
    if let DoublingOutcome::NotDoubling(ev) = &outcome.doubling {
        println!(
            "doubling: none up to sigma = {} ({} witnesses)",
            ev.sigma_max,
            ev.witnesses.len()
        );
    }
    for s in &outcome.sweeps {
        println!("{:<24} {:<9} {}", s.name, s.kind, s.verdict);
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    if outcome.all_passed {
        Ok(())
    } else {
        Err(Failure::Verdict)
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config } => run_config(&config, None),
        Command::Sweep { config, name } => run_config(&config, Some(&name)),
        Command::ProfileValidate(args) => {
            let profile = args.build()?;
            let report = profile.validate();
            println!("{}", report.profile);
            let checks = [
                ("f(0) = 0", report.f0_zero),
                ("strictly increasing", report.strictly_increasing),
                ("subharmonic", report.subharmonic),
                ("grows to infinity", report.grows_to_infinity),
                ("infinite-order vanishing", report.infinite_order_vanishing),
                ("C1 extension", report.extension_c1),
            ];
            for (name, ok) in checks {
                println!("  {:<26} {}", name, if ok { "pass" } else { "FAIL" });
            }
            for w in &report.witnesses {
                println!("  witness {} at x = {:e}: {}", w.check, w.x, w.detail);
            }
            if report.all_passed() {
                println!("all checks pass");
                Ok(())
            } else {
                Err(Failure::Verdict)
            }
        }
        Command::DoublingFind { profile, r, sigma_max } => {
            let profile = profile.build()?;
            let outcome = find_sigma(&profile.lambda(), r, sigma_max)?;
            print_json(&outcome)?;
            match outcome {
                DoublingOutcome::Certified(_) => Ok(()),
                DoublingOutcome::NotDoubling(_) => Err(Failure::Verdict),
            }
        }
        Command::KernelEval { profile, point } => {
            let kernel = SlicingKernel::new(profile.build()?, SlicingConfig::with_k_max(point.k_max));
            let k = kernel.kernel_diag(point.z_abs, point.im_w)?;
            print_json(&serde_json::json!({
                "K": k.value,
                "error": k.error,
                "converged": k.converged,
            }))?;
            Ok(())
        }
        Command::MetricEval { profile, point } => {
            let kernel = SlicingKernel::new(profile.build()?, SlicingConfig::with_k_max(point.k_max));
            print_json(&metric_reference(&kernel, point.z_abs, point.im_w)?)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict) => ExitCode::from(2),
        Err(Failure::Execution(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
