//! Machine-readable run reports.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::config::SCHEMA_VERSION;
use super::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// Finished, with quality flags raised.
    Degraded,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Inputs {
    /// SHA-256 of the configuration text.
    pub config_sha256: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorInfo {
    /// `validation` or `computation`.
    pub kind: &'static str,
    pub stage: Option<String>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub schema_version: u32,
    pub inputs: Inputs,
    pub status: Status,
    pub payload: Value,
    pub quality_flags: Vec<Value>,
    pub error: Option<ErrorInfo>,
    /// Wall time; the only field that varies between identical runs.
    pub timing_ms: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Report {
    pub fn new(command: &str, inputs: Inputs) -> Self {
        Report {
            command: command.to_string(),
            schema_version: SCHEMA_VERSION,
            inputs,
            status: Status::Ok,
            payload: Value::Null,
            quality_flags: Vec::new(),
            error: None,
            timing_ms: 0.0,
        }
    }

    pub fn fail(&mut self, e: &CliError) {
        self.status = Status::Error;
        let (kind, stage) = match e {
            CliError::Validation(_) => ("validation", None),
            CliError::Computation { stage, .. } => ("computation", Some(stage.clone())),
            CliError::Io { .. } => ("computation", Some("output".to_string())),
        };
        self.error = Some(ErrorInfo {
            kind,
            stage,
            message: e.to_string(),
        });
    }

    /// Serialized report without the timing field; identical for identical
    /// config and seed.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Value::Object(m) = &mut v {
            m.remove("timing_ms");
        }
        serde_json::to_string(&v).expect("report serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// 0 ok, 2 validation, 3 computation, 4 flags under `strict`.
    pub fn exit_code(&self, strict: bool) -> i32 {
        match (&self.error, self.status) {
            (Some(ErrorInfo { kind: "validation", .. }), _) => 2,
            (Some(_), _) => 3,
            (None, Status::Degraded) if strict => 4,
            _ => 0,
        }
    }
}

/// Write `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io_err)
}
