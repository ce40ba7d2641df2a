//! Thin command-line front end; all work happens in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ors_lab::cli;
use ors_lab::config::RunConfig;

#[derive(Parser)]
#[command(name = "ors-lab", about = "Occupancy reward shaping at desk scale", version)]
struct Args {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the offline dataset and its assumption report.
    GenData,
    /// Train pipeline stages.
    Train {
        /// occupancy, reward, policy, or all.
        #[arg(long, default_value = "all")]
        stage: String,
    },
    /// Verify the shaped-reward theory; exit code 0 = clean, 2 = violations,
    /// 3 = preconditions unmet.
    Verify {
        /// prop1, prop2, theorem1, or all.
        #[arg(long, default_value = "all")]
        which: String,
        /// Produce diagnostic-only bound reports (no pass assertion).
        #[arg(long)]
        diagnostic: bool,
    },
    /// Run the value-noise sweep and reward-field dump.
    Analyze,
    /// Evaluate the trained policy.
    Eval,
}

fn load_config(args: &Args) -> Result<RunConfig, cli::CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.to_string_lossy().to_string();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load_config(&args) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    let result: Result<i32, cli::CliError> = match &args.command {
        Command::GenData => cli::cmd_gen_data(&cfg).map(|()| cli::EXIT_OK),
        Command::Train { stage } => cli::cmd_train(&cfg, stage).map(|()| cli::EXIT_OK),
        Command::Verify { which, diagnostic } => cli::cmd_verify(&cfg, which, *diagnostic),
        Command::Analyze => cli::cmd_analyze(&cfg).map(|()| cli::EXIT_OK),
        Command::Eval => cli::cmd_eval(&cfg).map(|()| cli::EXIT_OK),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
