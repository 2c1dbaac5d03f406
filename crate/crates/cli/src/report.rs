//! Structured reports and output files.
//!
//! `report.txt` is a TOML document that depends only on the configuration,
//! so identical runs produce byte-identical reports. Wall-clock timings go
//! to the separate `timing.txt`.

use crate::error::CliError;
use covbloch_core::{Defect, Flags};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

/// One verified identity.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    /// Where the check was evaluated, e.g. `tau=0.2`.
    pub context: String,
    pub defect: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub flags: Vec<String>,
    pub lhs_norm: f64,
    pub rhs_norm: f64,
    /// Raw quantity behind the defect, where one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Report {
    pub command: String,
    pub config_hash: String,
    pub tolerance_scale: f64,
    pub status: String,
    pub checks: usize,
    pub failures: usize,
    pub warnings: usize,
    #[serde(rename = "check")]
    pub records: Vec<CheckRecord>,
}

impl Report {
    pub fn new(command: &str, config_hash: String, tolerance_scale: f64) -> Self {
        Report {
            command: command.into(),
            config_hash,
            tolerance_scale,
            status: "pass".into(),
            checks: 0,
            failures: 0,
            warnings: 0,
            records: Vec::new(),
        }
    }

    /// Records a defect against a tolerance. A check passes when its defect
    /// is within tolerance; raised flags are reported as warnings.
    pub fn push(&mut self, name: &str, context: impl Into<String>, defect: &Defect, tolerance: f64) {
        self.push_with_value(name, context, defect, tolerance, None);
    }

    pub fn push_with_value(
        &mut self,
        name: &str,
        context: impl Into<String>,
        defect: &Defect,
        tolerance: f64,
        value: Option<f64>,
    ) {
        let pass = defect.value <= tolerance;
        self.checks += 1;
        if !pass {
            self.failures += 1;
            self.status = "fail".into();
        }
        if !defect.flags.is_clean() {
            self.warnings += 1;
        }
        self.records.push(CheckRecord {
            name: name.into(),
            context: context.into(),
            defect: defect.value,
            tolerance,
            pass,
            flags: flag_names(defect.flags),
            lhs_norm: defect.lhs_norm,
            rhs_norm: defect.rhs_norm,
            value,
        });
    }

    pub fn render(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Io(format!("cannot render report: {e}")))
    }
}

fn flag_names(flags: Flags) -> Vec<String> {
    flags.names().into_iter().map(String::from).collect()
}

/// Phase timings, written to `timing.txt`.
#[derive(Debug, Default)]
pub struct Timing {
    phases: Vec<(String, Duration)>,
    current: Option<(String, Instant)>,
    threads: usize,
}

impl Timing {
    pub fn new(threads: usize) -> Self {
        Timing {
            threads,
            ..Default::default()
        }
    }

    pub fn phase(&mut self, name: &str) {
        self.finish();
        self.current = Some((name.into(), Instant::now()));
    }

    pub fn finish(&mut self) {
        if let Some((name, start)) = self.current.take() {
            self.phases.push((name, start.elapsed()));
        }
    }

    pub fn render(&mut self) -> String {
        self.finish();
        let total: Duration = self.phases.iter().map(|(_, d)| *d).sum();
        let mut out = format!("threads = {}\ntotal_seconds = {:.6}\n", self.threads, total.as_secs_f64());
        for (name, d) in &self.phases {
            out.push_str(&format!("{name} = {:.6}\n", d.as_secs_f64()));
        }
        out
    }
}

/// Output directory wrapper.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))
    }

    pub fn csv(&self, name: &str) -> Result<csv::Writer<std::fs::File>, CliError> {
        let p = self.path(name);
        csv::Writer::from_path(&p).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))
    }
}
