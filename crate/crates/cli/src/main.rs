//! `quivernet`: train MLPs, attack them, compute induced matrices and run
//! the matrix-statistics detector from reproducible TOML run files.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or config error,
//! 3 I/O error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug)]
pub struct VerificationFailed(pub Vec<String>);

impl fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verification failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for VerificationFailed {}

#[derive(Parser, Debug)]
#[command(name = "quivernet", version, about = "Induced quiver matrices, adversarial attacks and detection")]
struct Cli {
    /// Run file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every component seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network and write its checkpoint and training curves.
    Train,
    /// Run the configured attacks on the correctly classified test samples.
    Attack(ModelArg),
    /// Write induced matrices of dataset or adversarial samples.
    Matrices(MatricesArgs),
    /// Build class statistics, grid-search the detector and save it.
    Calibrate(CalibrateArgs),
    /// Score a saved detector on adversarial sets and the clean test set.
    Detect(DetectArgs),
    /// Run the randomized theorem battery and the gradient check.
    Verify,
    /// Print detection reports in table form.
    Report(ReportArgs),
    /// Train, attack, calibrate and report in one go.
    Pipeline,
}

#[derive(Args, Debug)]
struct ModelArg {
    /// Directory holding the `model` checkpoint.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct MatricesArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Use only the first N samples.
    #[arg(long)]
    count: Option<usize>,
    /// Take the samples from an adversarial set in this directory instead.
    #[arg(long, requires = "attack")]
    adversarial: Option<PathBuf>,
    /// Name of the adversarial set.
    #[arg(long, requires = "adversarial")]
    attack: Option<String>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output directory of `attack`.
    #[arg(long)]
    adversarial: PathBuf,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output directory of `calibrate`.
    #[arg(long)]
    detector: PathBuf,
    #[arg(long)]
    adversarial: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// `report.json` files or directories containing one.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use quivernet::Error as E;
    for cause in err.chain() {
        if cause.is::<VerificationFailed>() {
            return 1;
        }
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return 2;
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_)
                | E::Json(_)
                | E::Csv(_)
                | E::BadMagic(_)
                | E::UnsupportedTypeCode(_)
                | E::TruncatedPayload { .. }
                | E::TrailingBytes(_)
                | E::ManifestMismatch(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!(ConfigError("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = base.resolve(cli.seed, cli.out.clone());
    match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Attack(a) => commands::attack(&cfg, &a.model),
        Command::Matrices(a) => commands::matrices(
            &cfg,
            &a.model,
            matches!(a.split, SplitArg::Train),
            a.count,
            a.adversarial.as_deref().zip(a.attack.as_deref()),
        ),
        Command::Calibrate(a) => commands::calibrate(&cfg, &a.model, &a.adversarial),
        Command::Detect(a) => commands::detect(&cfg, &a.model, &a.detector, &a.adversarial),
        Command::Verify => commands::verify(&cfg),
        Command::Report(a) => commands::report(&cfg, &a.inputs),
        Command::Pipeline => commands::pipeline(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        let verify: anyhow::Error = VerificationFailed(vec!["convexity".into()]).into();
        assert_eq!(exit_code(&verify), 1);
        assert_eq!(exit_code(&ConfigError("x".into()).into()), 2);
        assert_eq!(exit_code(&quivernet::Error::InvalidConfig("x".into()).into()), 2);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(exit_code(&anyhow::Error::from(io).context("reading")), 3);
        assert_eq!(exit_code(&quivernet::Error::BadMagic([0; 4]).into()), 3);
    }
}
