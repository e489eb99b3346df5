use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bslab::certlab::TheoremId;
use bslab::error::Error;
use bslab::experiment::{default_out_root, reference_specs, render_report, run_experiment, symbol_table, write_scan_csv, ExperimentConfig, Plan, ReportFormat, RunReport};
use bslab::spectra::write_spectrum_csv;
use clap::{Parser, Subcommand};

/// Birman–Schwinger laboratory for fractional Schrödinger and Dirac operators on periodic grids.
///
/// Physics parameters come from the experiment file only; flags choose outputs and workers.
/// Exit status: 0 success, 1 a certificate FAILed, 2 invalid input, 3 a computation failed.
#[derive(Parser)]
#[command(name = "bslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print symbol data: essential spectrum, critical values, admissible q.
    Symbols {
        /// Experiment file; without it a reference table is printed.
        config: Option<PathBuf>,
    },
    /// Eigenvalues of H0 + V with labels, as CSV.
    Spectrum {
        config: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Schatten norms and regularized determinants of M(z) along the ray or region, as CSV.
    Bs {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a single verifier from the experiment file.
    Verify {
        theorem: String,
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run every verifier listed in the experiment file.
    Scan {
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(clap::Args)]
struct OutArgs {
    /// Output root (default: $BSLAB_OUT, else ./bslab-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: run.workers from the file).
    #[arg(long)]
    workers: Option<usize>,
    /// Summary format printed on stdout.
    #[arg(long, default_value = "markdown")]
    format: String,
}

enum Failure {
    Input(Error),
    Compute(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Parse(_) => Failure::Input(e),
            other => Failure::Compute(other),
        }
    }
}

fn plan(path: &PathBuf) -> Result<Plan, Failure> {
    ExperimentConfig::load(path).and_then(|c| c.validate()).map_err(Failure::Input)
}

fn sink(output: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match output {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Failure::Input(Error::config(p.display().to_string(), e.to_string())))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn finish(report: RunReport, format: ReportFormat) -> Result<i32, Failure> {
    eprintln!("artifacts in {}", report.dir.display());
    if !report.certificates.is_empty() {
        print!("{}", render_report(&report.certificates, format)?);
    }
    if let Some(f) = &report.failure {
        eprintln!("job `{}` failed: {}", f.id, f.message);
    }
    Ok(report.exit_code())
}

fn run(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Symbols { config } => {
            let specs = match config {
                Some(p) => vec![plan(&p)?.spec],
                None => reference_specs(),
            };
            print!("{}", symbol_table(&specs));
            Ok(0)
        }
        Command::Spectrum { config, output } => {
            let plan = plan(&config)?;
            let sp = plan.spectrum()?;
            write_spectrum_csv(&sp.points, sink(&output)?)?;
            Ok(0)
        }
        Command::Bs { config, output } => {
            let plan = plan(&config)?;
            write_scan_csv(&plan.bs_scan()?, sink(&output)?)?;
            Ok(0)
        }
        Command::Verify { theorem, config, out } => {
            let id: TheoremId = theorem.parse().map_err(Failure::Input)?;
            let mut cfg = ExperimentConfig::load(&config).map_err(Failure::Input)?;
            cfg.run.theorems = vec![id.as_str().to_string()];
            let format = out.format.parse().map_err(Failure::Input)?;
            cfg.validate().map_err(Failure::Input)?;
            let report = run_experiment(&cfg, out.out.unwrap_or_else(default_out_root), out.workers)?;
            finish(report, format)
        }
        Command::Scan { config, out } => {
            let cfg = ExperimentConfig::load(&config).map_err(Failure::Input)?;
            let format = out.format.parse().map_err(Failure::Input)?;
            cfg.validate().map_err(Failure::Input)?;
            let report = run_experiment(&cfg, out.out.unwrap_or_else(default_out_root), out.workers)?;
            finish(report, format)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
