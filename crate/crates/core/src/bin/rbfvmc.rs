use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rbf_vmc::harness::{self, HarnessError, Preset};

#[derive(Parser)]
#[command(name = "rbfvmc", version, about = "RBF-network variational Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a key = value config file.
    Run { config: PathBuf },
    /// Rerun a reference sweep and print a pass/fail report.
    Reproduce {
        /// table1, table2, table3, efield or overlaps
        preset: Preset,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory; defaults to $RBFVMC_OUT_DIR, then ./results.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a matrix config and compare its amplitudes with the exact eigenvector.
    EigvecReport { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run { config } => {
            let (_, paths) = harness::run(&config)?;
            let summary = std::fs::read_to_string(&paths.summary).unwrap_or_default();
            print!("{summary}");
            println!("trace: {}", paths.trace.display());
        }
        Command::Reproduce { preset, seed, out } => {
            let dir = out.unwrap_or_else(|| harness::resolve_out_dir(harness::DEFAULT_OUT_DIR.as_ref()));
            let report = harness::reproduce(preset, seed, Some(&dir))?;
            print!("{}", report.to_text());
            println!("report: {}", dir.join(format!("{preset}_report.txt")).display());
        }
        Command::EigvecReport { config } => {
            println!("{}", harness::eigvec_report(&config)?);
        }
    }
    Ok(())
}
