use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use regime_cli::commands;
use regime_cli::config::Workers;
use regime_cli::{CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "regime", version, about = "Deterministic multi-context bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run planners over a replay table.
    Run,
    /// Run the synthetic validation grid.
    Grid,
    /// Regime accuracy and correlations over condition summaries.
    Analyze,
    /// Check closed forms against Monte Carlo.
    Validate,
    /// Benchmark mixture weight for a target average effect.
    Mixture,
    /// Emit the minimum-reporting block per condition.
    ReportProtocol,
}

fn load(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Workers::Count(w);
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let cfg = load(cli)?;
    match cli.command {
        Command::Run => commands::cmd_run(&cfg),
        Command::Grid => commands::cmd_grid(&cfg),
        Command::Analyze => commands::cmd_analyze(&cfg),
        Command::Validate => commands::cmd_validate(&cfg),
        Command::Mixture => commands::cmd_mixture(&cfg),
        Command::ReportProtocol => commands::cmd_report_protocol(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("regime: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
