use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use turnpike_lab::{run, Command, RunConfig};

/// Optimal control of the semilinear heat equation and turnpike diagnostics.
#[derive(Debug, Parser)]
#[command(name = "turnpike-lab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for `sweep`; overrides `sweep.jobs`.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::load(&cli.config).and_then(|mut cfg| {
        if let Some(out) = cli.out {
            cfg.out = out;
        }
        if let Some(jobs) = cli.jobs {
            cfg.sweep.jobs = jobs.max(1);
        }
        let out = cfg.out.clone();
        run(cli.command, &cfg, &out)
    });
    match result {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("{}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
