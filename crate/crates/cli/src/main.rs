mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CliError;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "funcdist", version, about = "Cross-industry functional distances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare analytic and Monte Carlo MSEs in the two-group linear model.
    SimulateStylized(Common),
    /// Write a synthetic firm panel plus planted pair and deal panels.
    GenSynthetic(Common),
    /// Train one network per industry-year and save the weights.
    Train(Common),
    /// Train and compute all pairwise distances.
    Distances(Common),
    /// Estimate the regression tables from existing panels.
    Regress(Common),
    /// Run everything end to end.
    Report(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Replace the configured base seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Replace the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config).map_err(CliError::Validation)?;
        if let Some(s) = self.seed_override {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        cfg.validate().map_err(CliError::Validation)?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, cmd) = match &cli.command {
        Command::SimulateStylized(c) => (c, commands::simulate_stylized as commands::Handler),
        Command::GenSynthetic(c) => (c, commands::gen_synthetic as commands::Handler),
        Command::Train(c) => (c, commands::train as commands::Handler),
        Command::Distances(c) => (c, commands::distances as commands::Handler),
        Command::Regress(c) => (c, commands::regress as commands::Handler),
        Command::Report(c) => (c, commands::report as commands::Handler),
    };
    let cfg = common.load()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(CliError::Validation(anyhow::anyhow!("--workers must be at least 1")));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.into()))?;
    pool.install(|| {
        commands::prepare_output(&cfg)?;
        cmd(&cfg)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FUNCDIST_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.code())
        }
    }
}
