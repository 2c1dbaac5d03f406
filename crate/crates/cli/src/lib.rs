//! Command-line driver for the covering-space Bloch toolkit.
//!
//! A run loads a TOML configuration, builds the covering model, evaluates
//! one check suite and writes `report.txt`, `timing.txt` and CSV data into
//! the output directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::CommandKind;
pub use config::{Model, RunConfig};
pub use error::CliError;
pub use report::Report;

use report::{OutDir, Timing};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub tolerance_scale: f64,
    pub threads: Option<usize>,
}

/// Exit code of a finished run: 0 when every check passed, 1 otherwise.
pub fn exit_code(report: &Report) -> u8 {
    if report.failures == 0 {
        0
    } else {
        1
    }
}

/// Stable hash of everything that determines a report.
pub fn config_hash(command: CommandKind, config: &RunConfig, scale: f64) -> Result<String, CliError> {
    let canonical = serde_json::to_string(&(command.name(), config, scale))
        .map_err(|e| CliError::Validation(format!("cannot serialize config: {e}")))?;
    Ok(format!("sha256:{}", hex::encode(Sha256::digest(canonical.as_bytes()))))
}

/// Runs one subcommand and writes its outputs.
pub fn run(command: CommandKind, options: &RunOptions) -> Result<Report, CliError> {
    if !(options.tolerance_scale.is_finite() && options.tolerance_scale > 0.0) {
        return Err(CliError::Validation(format!(
            "--tolerance-scale must be positive, got {}",
            options.tolerance_scale
        )));
    }
    if options.threads == Some(0) {
        return Err(CliError::Validation("--threads must be at least 1".into()));
    }
    let config = RunConfig::load(&options.config)?;
    let out = output_dir(options, &config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    pool.install(|| execute(command, &config, options.tolerance_scale, &out, threads))
}

fn output_dir(options: &RunOptions, config: &RunConfig) -> Result<PathBuf, CliError> {
    match (&options.out, &config.output.directory) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(d)) => {
            // relative directories resolve against the config file
            let base = options.config.parent().unwrap_or(Path::new("."));
            Ok(base.join(d))
        }
        (None, None) => Err(CliError::Validation(
            "no output directory: pass --out or set output.directory".into(),
        )),
    }
}

fn execute(
    command: CommandKind,
    config: &RunConfig,
    scale: f64,
    out: &Path,
    threads: usize,
) -> Result<Report, CliError> {
    let mut timing = Timing::new(threads);
    timing.phase("build");
    let model = Model::build(config)?;
    let out = OutDir::create(out)?;
    let hash = config_hash(command, config, scale)?;
    let mut run = commands::Run {
        config,
        scale,
        out: &out,
        report: Report::new(command.name(), hash, scale),
        timing,
    };
    match command {
        CommandKind::CheckHarmonic => commands::check_harmonic(&mut run, &model)?,
        CommandKind::Bloch => commands::bloch(&mut run, &model)?,
        CommandKind::Schulman => commands::schulman(&mut run, &model)?,
    }
    out.write_text("report.txt", &run.report.render()?)?;
    out.write_text("timing.txt", &run.timing.render())?;
    Ok(run.report)
}
