use clap::{Parser, ValueEnum};
use parstab_cli::commands;
use parstab_cli::{parse_config, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Synthesize,
    Certify,
    Simulate,
    Pipeline,
    Sweep,
}

/// Observer-based boundary output-feedback stabilization of parabolic PDEs.
///
/// Exit codes: 0 success, 1 config or I/O error, 2 synthesis failure,
/// 3 certification failure, 4 simulation divergence.
#[derive(Debug, Parser)]
#[command(name = "parstab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Reserved; every stage is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    verbose: bool,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = parse_config(&cli.config)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Synthesize => commands::cmd_synthesize(&config, out),
        Command::Certify => commands::cmd_certify(&config, out),
        Command::Simulate => commands::cmd_simulate(&config, out),
        Command::Pipeline => commands::cmd_pipeline(&config, out),
        Command::Sweep => commands::cmd_sweep(&cli.config, &config, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if cli.seed.is_some() {
        log::debug!("--seed is accepted but unused");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("parstab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
