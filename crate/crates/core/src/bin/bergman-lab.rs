use std::path::PathBuf;
use std::process::ExitCode;

use bergman_lab::cli::{exit_code, run_experiment, Subcommand};
use bergman_lab::config::ExperimentConfig;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Model,
    Normalize,
    Expand,
    Oracle,
    Gap,
    Compare,
    Symbols,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Model => Subcommand::Model,
            Command::Normalize => Subcommand::Normalize,
            Command::Expand => Subcommand::Expand,
            Command::Oracle => Subcommand::Oracle,
            Command::Gap => Subcommand::Gap,
            Command::Compare => Subcommand::Compare,
            Command::Symbols => Subcommand::Symbols,
        }
    }
}

/// Semiclassical Bergman kernel experiments driven by a JSON config.
#[derive(Debug, Parser)]
#[command(name = "bergman-lab", version)]
struct Args {
    command: Command,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Exit with status 1 when a property check fails.
    #[arg(long)]
    check: bool,
    /// Output directory; defaults to run.output from the config, then the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = ExperimentConfig::load(&args.config).and_then(|cfg| {
        let out = args.out.clone().or_else(|| cfg.run.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
        run_experiment(&cfg, args.command.into(), &out)
    });
    match &result {
        Ok(o) => {
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            for c in &o.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result, args.check) as u8)
}
