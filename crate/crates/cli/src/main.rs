use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use qmgeo_cli::{run, Invocation, Subcommand};

#[derive(Parser)]
#[command(name = "qmgeo", version, about = "QMGeo quantizer, privacy accountant and FL simulator")]
enum Cli {
    /// Output distribution of the quantizer for given inputs.
    Pmf(Common),
    /// Quantize a vector of values.
    Quantize(Common),
    /// Closed-form and oracle privacy report, plus optional sweeps.
    Privacy(Common),
    /// Run a federated training simulation.
    Simulate(Common),
    /// Optimality-gap bound and per-step checks for a metrics file.
    Bound(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `master_seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let (cmd, common) = match Cli::parse() {
        Cli::Pmf(c) => (Subcommand::Pmf, c),
        Cli::Quantize(c) => (Subcommand::Quantize, c),
        Cli::Privacy(c) => (Subcommand::Privacy, c),
        Cli::Simulate(c) => (Subcommand::Simulate, c),
        Cli::Bound(c) => (Subcommand::Bound, c),
    };
    let inv = Invocation {
        config: common.config,
        out: common.out,
        seed: common.seed,
    };
    match run(cmd, &inv) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
