use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dapi_cli::commands::{self, AnalyzeInputs, Failure, Overrides, Scheme};

/// Thread count for the parallel solvers and Monte-Carlo loops.
const THREADS_ENV: &str = "DAPI_THREADS";

#[derive(Parser)]
#[command(name = "dapi", version, about = "Robust DAPI secondary control for networked microgrids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario and synthesis configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.directory` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integration step override (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Seed override for sampling.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            dt: self.dt,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Search the multiplier grid and write a gain file.
    Synthesize {
        #[command(flatten)]
        common: Common,
    },
    /// Run the scenario and write one trajectory CSV per scheme.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Gain file from `synthesize`.
        #[arg(long)]
        gains: Option<PathBuf>,
        /// Run only this leg; both legs run when gains are given.
        #[arg(long, value_enum)]
        scheme: Option<Scheme>,
    },
    /// Check the certificate and trajectories and write metrics.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gains: PathBuf,
        /// Base-scheme trajectory; defaults to the one `simulate` wrote.
        #[arg(long)]
        base: Option<PathBuf>,
        /// Proposed-scheme trajectory; defaults to the one `simulate` wrote.
        #[arg(long)]
        proposed: Option<PathBuf>,
    },
    /// Bundle every output in a directory into `report.md`.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Input(anyhow::anyhow!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Input(e.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors are input errors; clap's own status 2 means infeasible here
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Synthesize { common } => commands::synthesize(&common.config, &common.overrides()),
        Command::Simulate { common, gains, scheme } => {
            commands::simulate(&common.config, gains.as_deref(), *scheme, &common.overrides())
        }
        Command::Analyze {
            common,
            gains,
            base,
            proposed,
        } => commands::analyze(
            &AnalyzeInputs {
                config: &common.config,
                gains,
                base: base.as_deref(),
                proposed: proposed.as_deref(),
            },
            &common.overrides(),
        ),
        Command::Report { out } => commands::report(out),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
