use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use cryptofactor::pipeline::{load_config, Pipeline, PipelineError, Stage};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Ingest,
    Factors,
    Ivol,
    Chars,
    Panel,
    Vif,
    Report,
    Synth,
    All,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Self {
        match c {
            Command::Ingest => Stage::Ingest,
            Command::Factors => Stage::Factors,
            Command::Ivol => Stage::Ivol,
            Command::Chars => Stage::Chars,
            Command::Panel => Stage::Panel,
            Command::Vif => Stage::Vif,
            Command::Report => Stage::Report,
            Command::Synth => Stage::Synth,
            Command::All => Stage::All,
        }
    }
}

/// Cryptocurrency factor construction, idiosyncratic volatility and
/// investor-base panel regressions.
#[derive(Debug, Parser)]
#[command(name = "cryptofactor", version)]
struct Cli {
    /// Pipeline stage to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides the config).
    #[arg(long)]
    threads: Option<usize>,
    /// Synthetic-data seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = load_config(&cli.config, cli.out, cli.threads, cli.seed)?;
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    Pipeline::new(cfg)?.run(cli.command.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CRYPTOFACTOR_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cryptofactor: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
