use serde_json::{json, Value};
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Manifest or result file does not validate; nothing was written.
    Schema(String),
    /// A pipeline failed after validation.
    Compute(String),
    /// `reproduce` found payload differences.
    Drift(Value),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 3,
            CliError::Drift(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Schema(_) => "schema",
            CliError::Compute(_) => "compute",
            CliError::Drift(_) => "drift",
            CliError::Io(_) => "io",
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        });
        if let CliError::Drift(report) = self {
            v["error"]["drift"] = report.clone();
        }
        v
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "manifest rejected: {m}"),
            CliError::Compute(m) => write!(f, "computation failed: {m}"),
            CliError::Drift(r) => write!(
                f,
                "reproduction drifted in {} value(s)",
                r["differences"].as_array().map_or(0, Vec::len)
            ),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<homlab::Error> for CliError {
    fn from(e: homlab::Error) -> Self {
        CliError::Compute(e.to_string())
    }
}
