use std::path::PathBuf;
use std::process::ExitCode;

use beamlab::config::{PebConfig, SynthConfig};
use beamlab::experiments::{run_beam_fidelity, run_peb_sweep, RunSummary};
use beamlab::presets::{load_config_text, PRESETS};
use beamlab::RunError;
use beamlab_core::hardware::{LookupTable, TableKind};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "beamlab",
    version,
    about = "RIS beam synthesis under hardware lookup tables and near-field localization bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize beams per table and export pattern slices, maps and metrics
    Synth {
        /// Preset name (fig3, fig4, table2) or path to a JSON config
        #[arg(long)]
        config: String,
        /// Worker threads (default: available parallelism)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Sweep the position error bound over UE placements
    Peb {
        /// Preset name (fig5, fig6, fig7) or path to a JSON config
        #[arg(long)]
        config: String,
        /// Worker threads (default: available parallelism)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Inspect or validate reflection-coefficient lookup tables
    Tables {
        #[command(subcommand)]
        command: TablesCommand,
    },
}

#[derive(Subcommand)]
enum TablesCommand {
    /// List the built-in tables
    List,
    /// Parse and validate a CSV table file
    Validate { path: PathBuf },
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report(summary: &RunSummary) {
    println!("wrote {} files to {}", summary.outputs.len(), summary.output_dir.display());
    for name in &summary.outputs {
        println!("  {name}");
    }
}

fn run() -> Result<(), RunError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { config, threads } => {
            let text = load_config_text(&config)?;
            let mut cfg: SynthConfig = serde_json::from_str(&text)
                .map_err(|e| RunError::Config(format!("config `{config}`: {e}")))?;
            if threads.is_some() {
                cfg.threads = threads;
            }
            report(&run_beam_fidelity(&cfg)?);
            Ok(())
        }
        Command::Peb { config, threads } => {
            let text = load_config_text(&config)?;
            let mut cfg: PebConfig = serde_json::from_str(&text)
                .map_err(|e| RunError::Config(format!("config `{config}`: {e}")))?;
            if threads.is_some() {
                cfg.threads = threads;
            }
            report(&run_peb_sweep(&cfg)?);
            Ok(())
        }
        Command::Tables { command } => match command {
            TablesCommand::List => {
                for table in LookupTable::builtin() {
                    match table.kind() {
                        TableKind::Discrete => {
                            println!("{:<14} discrete, {} values", table.name(), table.cardinality());
                        }
                        TableKind::UnitCircle => {
                            println!("{:<14} continuous unit circle", table.name());
                        }
                    }
                }
                println!();
                println!("presets: {}", PRESETS.map(|(n, _)| n).join(", "));
                Ok(())
            }
            TablesCommand::Validate { path } => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
                let table = LookupTable::parse_csv(&text)
                    .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
                let max_mag = table
                    .values()
                    .iter()
                    .map(|v| v.norm())
                    .fold(0.0f64, f64::max);
                println!(
                    "ok: {} unique coefficients, max magnitude {:.6}",
                    table.cardinality(),
                    max_mag
                );
                Ok(())
            }
        },
    }
}
