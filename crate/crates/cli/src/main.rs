use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qkdbench_core::par::{self, Exec};
use qkdbench_core::runner::{self, ExperimentConfig};
use qkdbench_core::Error;

#[derive(Parser)]
#[command(name = "qkdbench", version, about = "Satellite BB84 link simulator and figure-data generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or config file and write its CSV, JSON summary and gnuplot script.
    Run {
        /// One of fig2, fig3, fig4, fig5, fig6, fig7, table3.
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config leaf, e.g. `signal.mu=0.3`. Repeatable.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Run without rayon.
        #[arg(long)]
        sequential: bool,
    },
    /// Check a config file and list every problem found.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the pass profile of a config file as CSV.
    Pass {
        #[arg(long)]
        config: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn threads_from_env() -> Result<Option<usize>, Error> {
    match std::env::var("QKDBENCH_THREADS") {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("QKDBENCH_THREADS must be a positive integer, got `{v}`"))),
    }
}

fn load(
    preset: Option<&str>,
    config: Option<&PathBuf>,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<ExperimentConfig, Error> {
    let base = match (preset, config) {
        (Some(name), _) => runner::preset(name)?,
        (None, Some(path)) => ExperimentConfig::load(path)?,
        (None, None) => return Err(Error::Config("either --preset or --config is required".into())),
    };
    let mut cfg = base.with_overrides(overrides)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    runner::validate_config(&cfg)?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Error> {
    let threads = threads_from_env()?;
    match cli.command {
        Command::Run { preset, config, overrides, seed, out, sequential } => {
            let cfg = load(preset.as_deref(), config.as_ref(), &overrides, seed)?;
            let exec = if sequential { Exec::Sequential } else { Exec::Parallel };
            let files = par::with_threads(threads, || {
                runner::run_experiment(&cfg, exec).and_then(|r| r.write(&out, exec))
            })?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            runner::validate_config(&cfg)?;
            println!("{}: ok", config.display());
        }
        Command::Pass { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            runner::validate_config(&cfg)?;
            let csv = runner::pass_csv(&runner::pass_rows(&cfg)?);
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(|e| Error::Io { path, source: e })?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
