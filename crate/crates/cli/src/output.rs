use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use volscan_core::Error as CoreError;

pub const SCHEMA: &str = "volscan/1";
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Concrete parameters of one invocation; written next to every output.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff_request: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub include_border: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peel_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iso: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: PipelineConfig,
    pub formats: Value,
}

impl Provenance {
    pub fn new(command: &str, config: PipelineConfig) -> Self {
        Self {
            tool: "volscan".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            formats: json!({
                "vvol": volscan_core::volume::VVOL_VERSION,
                "sparse": "jsonl/1",
                "labels": "i32le/1",
                "flags": "u8/1",
                "point_cloud": volscan_core::export::POINT_CLOUD_FORMAT_VERSION,
                "mesh": "obj",
            }),
        }
    }
}

/// Standard stdout document.
pub fn document(command: &str, result: Value, provenance: &Provenance) -> Value {
    json!({
        "schema": SCHEMA,
        "command": command,
        "result": result,
        "provenance": provenance,
    })
}

/// `prefix` with `suffix` appended to its file name.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub category: &'static str,
    pub message: String,
    pub field: Option<String>,
}

impl CliError {
    pub fn usage(field: &str, message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            category: "usage",
            message: message.into(),
            field: Some(field.into()),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            category: "data",
            message: message.into(),
            field: None,
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INTERNAL,
            category: "internal",
            message: message.into(),
            field: None,
        }
    }

    pub fn exit(self) -> ! {
        let mut body = json!({
            "schema": SCHEMA,
            "error": self.message,
            "category": self.category,
            "exit_code": self.code,
        });
        if let Some(f) = self.field {
            body["field"] = json!(f);
        }
        let _ = writeln!(std::io::stdout().lock(), "{body}");
        eprintln!("error: {}", self.message);
        std::process::exit(self.code)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParam { field, message } => Self::usage(field, message),
            CoreError::OracleTooLarge { .. } => Self::internal(e.to_string()),
            other => Self::data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(format!("json: {e}"))
    }
}
