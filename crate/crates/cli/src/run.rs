//! Run configuration, manifests and failure reporting.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use trendcause::analysis::{DEFAULT_STRIDE, DEFAULT_WINDOW};
use trendcause::forecast::{CoherentConfig, DEFAULT_HORIZON};
use trendcause::influence::GrangerConfig;
use trendcause::ingest::{DEFAULT_PERIOD, DEFAULT_TEST, DEFAULT_VAL};
use trendcause::{Error, ErrorKind};

/// Settings file; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub granger: GrangerConfig,
    pub coherent: CoherentConfig,
    pub horizon: usize,
    pub val: usize,
    pub test: usize,
    pub period: usize,
    pub window: usize,
    pub stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            granger: GrangerConfig::default(),
            coherent: CoherentConfig::default(),
            horizon: DEFAULT_HORIZON,
            val: DEFAULT_VAL,
            test: DEFAULT_TEST,
            period: DEFAULT_PERIOD,
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
        }
    }
}

/// Written beside the outputs of every successful run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub version: String,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// `out/ranking.csv` -> `out/ranking.csv.run.json`.
pub fn manifest_path(first_output: &Path) -> PathBuf {
    let mut name = first_output.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    first_output.with_file_name(name)
}

/// What the process reports on failure.
#[derive(Debug)]
pub struct Failure {
    pub kind: ErrorKind,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Usage, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Data, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Numerical => "numerical",
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { kind: e.kind(), message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(manifest_path(Path::new("a/b/rank.csv")), Path::new("a/b/rank.csv.run.json"));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"horizon": 4, "coherent": {"hidden": 3}}"#).unwrap();
        assert_eq!(c.horizon, 4);
        assert_eq!(c.coherent.hidden, 3);
        assert_eq!(c.val, DEFAULT_VAL);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
