use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use oscarray::config::{Experiment, FileConfig, RunConfig};
use oscarray::harness;

#[derive(Parser)]
#[command(
    name = "oscarray",
    about = "Simulate and analyze arrays of atomic mechanical oscillators in an optical cavity",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file (defaults apply when omitted).
    #[arg(long, value_name = "PATH", global = true)]
    config: Option<PathBuf>,

    /// Top-level seed; every task derives its own stream from it.
    #[arg(long, value_name = "N", global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out", global = true)]
    out: PathBuf,

    /// Exclude a frequency interval from peak fitting, e.g. 98:100.
    /// Repeatable.
    #[arg(long = "exclude-kHz", value_name = "LO:HI", global = true)]
    exclude_khz: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize noisy on/off heterodyne records of the oscillator array.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Calibrate an on/off record pair and estimate occupations.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Spectrum CSV of the atoms-loaded record (sidecar expected beside it).
        #[arg(long, value_name = "PATH")]
        on: PathBuf,
        /// Spectrum CSV of the atoms-released reference record.
        #[arg(long, value_name = "PATH")]
        off: PathBuf,
    },
    /// Mechanical resonance imaging scan over loading positions.
    Mri {
        #[command(flatten)]
        common: Common,
    },
    /// Selective-addressing drive series with crosstalk bounds.
    Drive {
        #[command(flatten)]
        common: Common,
    },
    /// End-to-end estimator round-trip checks; exits nonzero on failure.
    Roundtrip {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, experiment) = match cli.command {
        Command::Simulate { common } => (common, Experiment::Simulate),
        Command::Analyze { common, on, off } => (common, Experiment::Analyze { on, off }),
        Command::Mri { common } => (common, Experiment::Mri),
        Command::Drive { common } => (common, Experiment::Drive),
        Command::Roundtrip { common } => (common, Experiment::Roundtrip),
    };

    let out_dir = common.out.clone();
    match run(common, experiment) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Machine-readable error record, on stderr and beside any
            // partial outputs.
            let record = serde_json::json!({ "error": format!("{err:#}") });
            eprintln!("{record}");
            if std::fs::create_dir_all(&out_dir).is_ok() {
                let _ = std::fs::write(
                    out_dir.join("error.json"),
                    format!("{record:#}\n").as_bytes(),
                );
            }
            ExitCode::FAILURE
        }
    }
}

fn run(common: Common, experiment: Experiment) -> Result<()> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => FileConfig::default(),
    };
    let seed = common.seed.unwrap_or(file.seed);
    let exclusions_khz = common
        .exclude_khz
        .iter()
        .map(|s| parse_interval(s))
        .collect::<Result<Vec<_>>>()?;

    let run = RunConfig {
        file,
        experiment,
        seed,
        output_dir: common.out.clone(),
        exclusions_khz,
    };
    harness::execute(&run)
        .with_context(|| format!("experiment {} failed", run.experiment.name()))?;
    println!(
        "{} complete; outputs in {}",
        run.experiment.name(),
        common.out.display()
    );
    Ok(())
}

fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .with_context(|| format!("expected LO:HI, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().with_context(|| format!("bad bound in {s:?}"))?;
    let hi: f64 = hi.trim().parse().with_context(|| format!("bad bound in {s:?}"))?;
    Ok((lo.min(hi), lo.max(hi)))
}
