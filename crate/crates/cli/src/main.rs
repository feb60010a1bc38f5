//! `eigenlab`: run configured experiments and consolidate their
//! summaries.  Exit codes: 0 success, 2 configuration/validation
//! error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eigenlab_cli::config::ExperimentKind;
use eigenlab_cli::error::{io_err, CliError};
use eigenlab_cli::{report, run_config, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "eigenlab",
    version,
    about = "Numerical workbench for weighted elliptic eigenvalue problems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve an eigenproblem and export the spectrum table
    Spectrum(RunArgs),
    /// Predicted vs finite-difference slopes under a metric variation
    VaryMetric(RunArgs),
    /// Predicted vs finite-difference slopes under a boundary deformation
    VaryDomain(RunArgs),
    /// Randomized first-order splitting trials on a degenerate cluster
    Split(RunArgs),
    /// Boundary constancy diagnostic for extremal domains
    ExtremalCheck(RunArgs),
    /// Eigenvalue evolution along homogeneous geometric flows
    RicciFlow(RunArgs),
    /// Consolidate summaries from one or more run manifests
    Report(ReportArgs),
}

impl Cmd {
    fn kind(&self) -> Option<ExperimentKind> {
        match self {
            Cmd::Spectrum(_) => Some(ExperimentKind::Spectrum),
            Cmd::VaryMetric(_) => Some(ExperimentKind::VaryMetric),
            Cmd::VaryDomain(_) => Some(ExperimentKind::VaryDomain),
            Cmd::Split(_) => Some(ExperimentKind::Split),
            Cmd::ExtremalCheck(_) => Some(ExperimentKind::ExtremalCheck),
            Cmd::RicciFlow(_) => Some(ExperimentKind::RicciFlow),
            Cmd::Report(_) => None,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `out` field)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Output format (only `csv` is supported)
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct ReportArgs {
    /// Run manifests to consolidate
    manifests: Vec<PathBuf>,
    /// Output format (only `csv` is supported)
    #[arg(long, default_value = "csv")]
    format: String,
}

fn check_format(format: &str) -> Result<(), CliError> {
    if format != "csv" {
        return Err(CliError::Config(format!(
            "format `{format}` is not supported; use `csv`"
        )));
    }
    Ok(())
}

fn run(cmd: &Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Report(args) => {
            check_format(&args.format)?;
            let rows = report::collect(&args.manifests)?;
            print!("{}", report::to_csv(&rows));
            Ok(())
        }
        _ => {
            let args = match cmd {
                Cmd::Spectrum(a)
                | Cmd::VaryMetric(a)
                | Cmd::VaryDomain(a)
                | Cmd::Split(a)
                | Cmd::ExtremalCheck(a)
                | Cmd::RicciFlow(a) => a,
                Cmd::Report(_) => unreachable!(),
            };
            check_format(&args.format)?;
            let raw = std::fs::read(&args.config).map_err(|e| io_err(&args.config, e))?;
            let mut cfg = ExperimentConfig::parse(&raw)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let expected = cmd.kind().expect("run subcommand");
            if cfg.experiment != expected {
                return Err(CliError::Config(format!(
                    "experiment: config says `{}` but the subcommand is `{}`",
                    cfg.experiment.name(),
                    expected.name()
                )));
            }
            let out = args
                .out
                .clone()
                .or_else(|| cfg.out.as_ref().map(PathBuf::from))
                .ok_or_else(|| {
                    CliError::Config("out: pass --out or set `out` in the config".into())
                })?;
            if let Some(n) = args.threads {
                // ignore the error from re-initializing; it only means a
                // pool already exists
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            let (manifest, path) = run_config(&cfg, &raw, &out)?;
            // settled summary lines, then where the full record lives
            let summary_path = out.join("summary.json");
            let raw_summary =
                std::fs::read(&summary_path).map_err(|e| io_err(&summary_path, e))?;
            let summary: eigenlab_cli::RunSummary = serde_json::from_slice(&raw_summary)
                .map_err(|e| CliError::Config(format!("{}: {e}", summary_path.display())))?;
            for row in &summary.rows {
                println!(
                    "{} {} = {} (threshold {}) {}",
                    manifest.experiment,
                    row.metric,
                    row.value,
                    row.tolerance,
                    if row.pass { "PASS" } else { "FAIL" }
                );
            }
            println!("manifest: {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
