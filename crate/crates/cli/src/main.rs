mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{AnalysisTable, AnalyzeOptions, RunOptions};
use config::RunConfig;
use error::CliError;

/// Adaptive two-stage integrators for MD and HMC.
///
/// Exit codes: 0 ok, 2 config or usage error, 3 unstable step size,
/// 4 numerical failure during a run, 5 file I/O error.
#[derive(Parser, Debug)]
#[command(name = "aiamd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Run configuration (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the step size from the config.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the normalised configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Choose b for the configured system and step size.
    Select(ConfigArgs),
    /// Run MD or HMC and write trajectory and observables.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory for output files.
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
        /// Independent chains to run concurrently; outputs get a `.rK` suffix.
        #[arg(long, default_value_t = 1)]
        replicas: usize,
    },
    /// Tabulate the energy-error bound rho(h, b) as CSV.
    ScanRho {
        /// b values: `start:stop:count` or `v1,v2,...`.
        #[arg(long)]
        b_grid: String,
        /// h values: `start:stop:count` or `v1,v2,...`.
        #[arg(long)]
        h_grid: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Post-process observables (CSV) or trajectories (JSON lines).
    Analyze {
        #[arg(long, value_enum)]
        table: AnalysisTable,
        /// Observables CSV for acf/iacf/histogram, trajectory for rmsd/rmst/rg.
        #[arg(long)]
        input: PathBuf,
        /// Observable column.
        #[arg(long, default_value = "H")]
        column: String,
        #[arg(long)]
        max_lag: Option<usize>,
        #[arg(long)]
        bin_width: Option<f64>,
        /// Frame stride for rmst.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Classify every bond period against the step size for Verlet.
    CheckDt(ConfigArgs),
}

fn load(args: &ConfigArgs) -> Result<Option<RunConfig>, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(dt) = args.dt {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CliError::Usage(format!("--dt must be positive, got {dt}")));
        }
        cfg.dt = Some(dt);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.print_config {
        print!("{}", cfg.to_text());
        return Ok(None);
    }
    Ok(Some(cfg))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Select(args) => match load(&args)? {
            Some(cfg) => commands::select(&cfg),
            None => Ok(()),
        },
        Command::CheckDt(args) => match load(&args)? {
            Some(cfg) => commands::check_dt(&cfg),
            None => Ok(()),
        },
        Command::Run {
            config,
            output_dir,
            replicas,
        } => match load(&config)? {
            Some(cfg) => commands::run(&cfg, &RunOptions { output_dir, replicas }),
            None => Ok(()),
        },
        Command::ScanRho { b_grid, h_grid, output } => {
            let b = commands::parse_grid(&b_grid)?;
            let h = commands::parse_grid(&h_grid)?;
            commands::scan_rho(&b, &h, output.as_deref())
        }
        Command::Analyze {
            table,
            input,
            column,
            max_lag,
            bin_width,
            stride,
            output,
        } => commands::analyze(&AnalyzeOptions {
            table,
            input,
            column,
            max_lag,
            bin_width,
            stride,
            output,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aiamd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

