use clap::{Args, Parser, Subcommand};
use covbloch_cli::{exit_code, run, CommandKind, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

/// Verify harmonic analysis, Bloch decomposition and image-sum identities
/// on covering graphs.
#[derive(Parser)]
#[command(name = "covbloch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check irreducible representations, Plancherel and Fourier identities.
    CheckHarmonic(RunArgs),
    /// Check the Bloch transform and the decomposition of the Hamiltonian.
    Bloch(RunArgs),
    /// Check image sums, reconstruction and smeared pairings of kernels.
    Schulman(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplies every tolerance.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::CheckHarmonic(a) => (CommandKind::CheckHarmonic, a),
        Command::Bloch(a) => (CommandKind::Bloch, a),
        Command::Schulman(a) => (CommandKind::Schulman, a),
    };
    let options = RunOptions {
        config: args.config,
        out: args.out,
        tolerance_scale: args.tolerance_scale,
        threads: args.threads,
    };
    match run(kind, &options) {
        Ok(report) => {
            println!(
                "{}: {} ({} checks, {} failures, {} warnings)",
                kind.name(),
                report.status,
                report.checks,
                report.failures,
                report.warnings
            );
            for r in report.records.iter().filter(|r| !r.pass) {
                eprintln!(
                    "FAIL {} [{}]: defect {:e} > tolerance {:e}",
                    r.name, r.context, r.defect, r.tolerance
                );
            }
            ExitCode::from(exit_code(&report))
        }
        Err(e) => {
            eprintln!("covbloch: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
