//! Command-line front end: run experiments, emit preset configurations,
//! generate permeability fields, and compare error logs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use msrom::error::Result;
use msrom::field;
use msrom::grid::build_fine_mesh;
use msrom::harness::{
    compare_runs, load_config, preset, read_errors_csv, run_experiment, save_config, PRESET_NAMES,
};

#[derive(Parser)]
#[command(
    name = "msrom",
    about = "Multiscale reduced-order solver for nonlinear parabolic equations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a named preset configuration to a file.
    Preset {
        /// Preset name; see --list.
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// List the available preset names.
        #[arg(long)]
        list: bool,
    },
    /// Permeability field utilities.
    Field {
        #[command(subcommand)]
        command: FieldCommand,
    },
    /// Compare two error CSV files and print a paired CSV.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Write the paired CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FieldCommand {
    /// Generate a high-contrast channelized field and save it as text.
    Gen {
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(long, default_value_t = 1e4)]
        contrast: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let out = run_experiment(&cfg)?;
            if let Some(rec) = out.report.final_record() {
                println!(
                    "done: {} steps, final t={} e_a={:.6e} e_2={:.6e} dof={}",
                    out.report.records.len(),
                    rec.t,
                    rec.e_a,
                    rec.e_2,
                    rec.dof
                );
            }
            println!("artifacts in {}", cfg.output.dir.display());
            Ok(())
        }
        Command::Preset { name, out, list } => {
            if list {
                for n in PRESET_NAMES {
                    println!("{n}");
                }
                return Ok(());
            }
            let name = name.ok_or_else(|| {
                msrom::error::Error::config("preset needs a name (or --list)")
            })?;
            let cfg = preset(&name)?;
            let out = out.ok_or_else(|| {
                msrom::error::Error::config("preset needs --out <file> to write the configuration")
            })?;
            save_config(&cfg, &out)?;
            println!("wrote preset `{name}` to {}", out.display());
            Ok(())
        }
        Command::Field { command } => match command {
            FieldCommand::Gen {
                nx,
                ny,
                contrast,
                seed,
                out,
            } => {
                let fine = build_fine_mesh(nx, ny)?;
                let f = field::generate_channelized(&fine, contrast, seed)?;
                field::save_field(&f, &out)?;
                println!("wrote {}x{} field to {}", nx, ny, out.display());
                Ok(())
            }
        },
        Command::Compare { a, b, out } => {
            let ra = read_errors_csv(&a)?;
            let rb = read_errors_csv(&b)?;
            let csv = compare_runs(&ra, &rb)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, csv).map_err(|e| msrom::error::Error::io(&path, e))?;
                    println!("wrote comparison to {}", path.display());
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
