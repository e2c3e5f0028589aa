//! `latticewalk run <config.json>` executes one configured task and writes its
//! data files; `latticewalk validate <config.json>` only checks the config.

mod config;
mod fail;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use fail::{CliError, CliResult};

/// Overrides the output directory named in the config.
pub const OUT_DIR_ENV: &str = "LATTICEWALK_OUT_DIR";

#[derive(Parser)]
#[command(name = "latticewalk", version, about = "Two-photon quantum walks in coupled waveguide lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (takes precedence over LATTICEWALK_OUT_DIR and the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Zero every negative violation entry in exported violation files.
        #[arg(long)]
        fig5_compatible: bool,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> CliResult<(ExperimentConfig, PathBuf)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let cfg = ExperimentConfig::parse(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn execute(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Validate { config } => {
            let (cfg, _) = load(&config)?;
            let n = cfg.validate()?;
            Ok(format!("valid: task {} on {n} modes", cfg.task.name()))
        }
        Command::Run { config, out, fig5_compatible } => {
            let (cfg, base) = load(&config)?;
            let out = run::resolve_out(out.as_deref(), &cfg, &base);
            let fig5 = fig5_compatible || cfg.output.fig5_compatible;
            run::run(&run::Context { cfg, base, out, fig5 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
