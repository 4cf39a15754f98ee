use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};


use gfflab_experiments::{run, ConfigError, ExitStatus, ExperimentConfig, Kind};

#[derive(Parser)]
#[command(name = "gff-lab", version, about = "Gaussian free field experiments on the torus and on Z^d")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Green-function identities, eigen-sum oracle and decay profile.
    GreenVerify(Flags),
    /// Sup-norm coupling distance and harmonic variances across N.
    CouplingScan(Flags),
    /// Frequency of the level-set sandwich on coupled pairs.
    SandwichScan(Flags),
    /// Cluster statistics of torus level sets across h and N.
    PercScan(Flags),
    /// Connection probabilities to the ball boundary on Z^d.
    EtaCurve(Flags),
    /// Bisection for the level where the connection probability crosses tau.
    Hstar(Flags),
    /// Boundary covariance across the torus seam.
    BoundaryProbe(Flags),
}

/// Every flag overrides the matching key of `--config`, which in turn
/// overrides the per-kind defaults. Lists are comma separated.
#[derive(Args)]
struct Flags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "N", value_name = "LIST")]
    sides: Option<String>,
    #[arg(long = "d")]
    dim: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    h: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "n", value_name = "LIST")]
    radii: Option<String>,
    #[arg(long, allow_hyphen_values = true, value_name = "LO,HI")]
    bracket: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    resolution: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    snapshots: bool,
}

impl Command {
    fn split(self) -> (Kind, Flags) {
        match self {
            Command::GreenVerify(f) => (Kind::GreenVerify, f),
            Command::CouplingScan(f) => (Kind::CouplingScan, f),
            Command::SandwichScan(f) => (Kind::SandwichScan, f),
            Command::PercScan(f) => (Kind::PercScan, f),
            Command::EtaCurve(f) => (Kind::EtaCurve, f),
            Command::Hstar(f) => (Kind::HStar, f),
            Command::BoundaryProbe(f) => (Kind::BoundaryProbe, f),
        }
    }
}

fn build_config(kind: Kind, flags: Flags) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
            let cfg = ExperimentConfig::parse(&text, Some(kind))?;
            if cfg.kind != kind {
                return Err(ConfigError::Invalid(format!(
                    "{} declares kind={}, but the subcommand is {kind}",
                    path.display(),
                    cfg.kind
                )));
            }
            cfg
        }
        None => ExperimentConfig::defaults(kind),
    };
    let overrides = [
        ("N", flags.sides),
        ("d", flags.dim),
        ("delta", flags.delta),
        ("h", flags.h),
        ("eps", flags.eps),
        ("reps", flags.reps),
        ("seed", flags.seed),
        ("n", flags.radii),
        ("bracket", flags.bracket),
        ("tau", flags.tau),
        ("resolution", flags.resolution),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if let Some(out) = flags.out {
        cfg.out = out;
    }
    if flags.snapshots {
        cfg.snapshots = true;
    }
    Ok(cfg)
}

/// Parses `args` (program name first), runs, and returns the exit status.
fn real_main<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // Through the print macros, so test harnesses capture it.
            if e.use_stderr() {
                eprint!("{e}");
            } else {
                print!("{e}");
            }
            return e.exit_code() as u8;
        }
    };
    let (kind, flags) = cli.command.split();
    let cfg = match build_config(kind, flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitStatus::InvalidConfig as u8;
        }
    };
    match run(&cfg) {
        Ok(report) => {
            for a in report.assertions.iter().filter(|a| !a.passed) {
                eprintln!("assertion failed: {} ({})", a.name, a.detail);
            }
            println!("{} records -> {}", report.records, report.csv.display());
            report.status() as u8
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.status() as u8
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = gfflab_experiments::init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(ExitStatus::InvalidConfig as u8);
    }
    ExitCode::from(real_main(std::env::args_os()))
}
