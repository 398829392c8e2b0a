//! Output directory handling and the per-run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub const DEFAULT_OUT: &str = "circembed-out";

/// State shared by a command while it runs.
pub struct Run {
    pub command: &'static str,
    pub out: PathBuf,
    pub threads: usize,
    config: Option<PathBuf>,
    started: Instant,
    started_unix: u64,
    /// Effective parameters, keyed like the flags so that the object can be
    /// fed back as `--config`.
    pub parameters: Value,
    pub outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: Option<&'a Path>,
    threads: usize,
    started_unix: u64,
    wall_time: f64,
    exit_code: i32,
    error: Option<String>,
    parameters: &'a Value,
    outputs: Vec<String>,
    result: &'a Value,
}

impl Run {
    pub fn new(
        command: &'static str,
        out: PathBuf,
        threads: usize,
        config: Option<PathBuf>,
    ) -> Self {
        Run {
            command,
            out,
            threads,
            config,
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            parameters: Value::Null,
            outputs: Vec::new(),
        }
    }

    pub fn create_out_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.out.display())))
    }

    pub fn record_parameters<T: Serialize>(&mut self, params: &T) -> Result<(), CliError> {
        self.parameters = serde_json::to_value(params)?;
        Ok(())
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.outputs.push(p.clone());
        p
    }

    pub fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out.join(format!("{}.manifest.json", self.command))
    }

    pub fn write_manifest(&self, result: &Value, error: Option<&CliError>) -> Result<(), CliError> {
        let manifest = Manifest {
            tool: "circembed",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.config.as_deref(),
            threads: self.threads,
            started_unix: self.started_unix,
            wall_time: self.elapsed(),
            exit_code: error.map_or(0, CliError::exit_code),
            error: error.map(|e| e.to_string()),
            parameters: &self.parameters,
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            result,
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(self.manifest_path(), text)?;
        Ok(())
    }
}
