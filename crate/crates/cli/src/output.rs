//! Artifact sink: provenance envelopes, RFC-4180 CSV and atomic writes.

use serde::Serialize;
use serde_json::{json, Value};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::manifest::Manifest;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub manifest_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(m: &Manifest) -> Self {
        Self {
            tool: "homlab",
            version: VERSION,
            command: m.command.name(),
            manifest_sha256: m.sha256.clone(),
            seed: m.seed,
        }
    }
}

/// Collects artifacts; writes them into `dir` when one is given, keeps them in memory otherwise.
pub struct Sink {
    dir: Option<PathBuf>,
    provenance: Provenance,
    manifest: Value,
    files: Vec<(String, String)>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Sink {
    pub fn new(dir: Option<PathBuf>, manifest: &Manifest) -> Self {
        Self {
            dir,
            provenance: Provenance::of(manifest),
            manifest: manifest.canonical.clone(),
            files: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }

    fn envelope(&self, status: &str, payload: Value) -> Value {
        json!({
            "provenance": self.provenance,
            "manifest": self.manifest,
            "status": status,
            "payload": payload,
        })
    }

    fn emit(&mut self, name: &str, text: String, summary: &str) -> Result<(), CliError> {
        if let Some(dir) = &self.dir {
            write_atomic(dir, name, text.as_bytes())?;
            println!("{}: {summary}", dir.join(name).display());
        }
        self.files.push((name.to_string(), text));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, payload: &T, summary: &str) -> Result<(), CliError> {
        let payload = serde_json::to_value(payload).map_err(|e| CliError::Compute(e.to_string()))?;
        let text = homlab::numfmt::to_string_pretty(&self.envelope("complete", payload))
            .map_err(|e| CliError::Compute(e.to_string()))?;
        self.emit(name, text + "\n", summary)
    }

    /// Re-emits comma-separated `body` (header first) with provenance columns and CRLF endings.
    pub fn csv(&mut self, name: &str, body: &str, summary: &str) -> Result<(), CliError> {
        let p = &self.provenance;
        let extra = [p.manifest_sha256.clone(), p.seed.to_string(), p.version.to_string()];
        let mut out = String::new();
        for (k, line) in body.lines().filter(|l| !l.is_empty()).enumerate() {
            let mut cells: Vec<String> = line.split(',').map(csv_field).collect();
            if k == 0 {
                cells.extend(["manifest_sha256", "seed", "version"].map(String::from));
            } else {
                cells.extend(extra.iter().cloned());
            }
            out += &cells.join(",");
            out += "\r\n";
        }
        self.emit(name, out, summary)
    }

    /// Writes `FAILED.json` next to whatever was completed.
    pub fn mark_failed(&mut self, err: &CliError) -> Result<(), CliError> {
        let Some(dir) = self.dir.clone() else { return Ok(()) };
        let done: Vec<&str> = self.files.iter().map(|(n, _)| n.as_str()).collect();
        let v = self.envelope("partial", json!({ "error": err.to_json()["error"], "completed": done }));
        let text = homlab::numfmt::to_string_pretty(&v).map_err(|e| CliError::Compute(e.to_string()))?;
        write_atomic(&dir, "FAILED.json", text.as_bytes())?;
        Ok(())
    }
}

/// Writes `name` inside `dir` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}
