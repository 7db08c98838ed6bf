use std::path::PathBuf;
use std::process::ExitCode;

use anderson_lab::experiment::{error_exit_code, run_file, Command, RunOptions, Status};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    SiltValidate,
    Trace,
    Mass,
    Recover,
    Minkowski,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::SiltValidate => Command::SiltValidate,
            Cmd::Trace => Command::Trace,
            Cmd::Mass => Command::Mass,
            Cmd::Recover => Command::Recover,
            Cmd::Minkowski => Command::Minkowski,
        }
    }
}

/// Monte Carlo experiments for Feynman-Kac heat traces of planar Anderson
/// Hamiltonians.
///
/// Exit codes: 0 pass, 1 usage/config/schema error, 2 statistical-quality
/// failure.
#[derive(Debug, Parser)]
#[command(name = "anderson-lab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `out_dir` from the config, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: config `workers`, else all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let opts = RunOptions { out_dir: cli.out, workers: cli.workers, seed: cli.seed };
    match run_file(cli.command.into(), &cli.config, &opts) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if let Status::QualityFailure(items) = &outcome.status {
                eprintln!("statistical-quality failure:");
                for item in items {
                    eprintln!("  {item}");
                }
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
