//! Re-running a result file from its embedded manifest and diffing the payload.

use serde_json::{json, Value};
use std::path::Path;

use crate::error::CliError;
use crate::manifest::{digest, Manifest};
use crate::output::{Sink, VERSION};
use crate::pipeline;

/// Differences listed in a drift report; the count covers all of them.
const MAX_LISTED: usize = 64;

struct Diff {
    compared: usize,
    count: usize,
    listed: Vec<Value>,
    rel_tol: f64,
}

impl Diff {
    fn push(&mut self, path: &str, recorded: &Value, reproduced: &Value) {
        self.count += 1;
        if self.listed.len() < MAX_LISTED {
            self.listed.push(json!({ "path": path, "recorded": recorded, "reproduced": reproduced }));
        }
    }

    fn walk(&mut self, path: &str, a: &Value, b: &Value) {
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                for (k, va) in x {
                    match y.get(k) {
                        Some(vb) => self.walk(&format!("{path}/{k}"), va, vb),
                        None => self.push(&format!("{path}/{k}"), va, &Value::Null),
                    }
                }
                for (k, vb) in y.iter().filter(|(k, _)| !x.contains_key(*k)) {
                    self.push(&format!("{path}/{k}"), &Value::Null, vb);
                }
            }
            (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
                for (i, (va, vb)) in x.iter().zip(y).enumerate() {
                    self.walk(&format!("{path}/{i}"), va, vb);
                }
            }
            (Value::Number(x), Value::Number(y)) => {
                self.compared += 1;
                let (p, q) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
                let same = x == y || (p - q).abs() <= self.rel_tol * p.abs().max(q.abs());
                if !same {
                    self.push(path, a, b);
                }
            }
            _ => {
                self.compared += 1;
                if a != b {
                    self.push(path, a, b);
                }
            }
        }
    }
}

/// Pass report, or `CliError::Drift` carrying the diff report.
pub fn reproduce(result: &Path, seed: Option<u64>, rel_tol: f64) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(result)?;
    let recorded: Value = serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("result is not JSON: {e}")))?;
    let manifest = recorded
        .get("manifest")
        .ok_or_else(|| CliError::Schema("result has no embedded manifest".into()))?;
    let hash = recorded["provenance"]["manifest_sha256"].as_str().unwrap_or_default();
    if digest(manifest) != hash {
        return Err(CliError::Schema("embedded manifest does not match its recorded hash".into()));
    }
    if recorded["status"] != "complete" {
        return Err(CliError::Schema("only complete results can be reproduced".into()));
    }
    let mut m = Manifest::from_value(manifest.clone())?;
    if let Some(s) = seed {
        m = m.with_seed(s)?;
    }
    let name = result
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::Schema("result path has no file name".into()))?;
    let mut sink = Sink::new(None, &m);
    pipeline::run(&m, &mut sink)?;
    let fresh = sink
        .get(name)
        .ok_or_else(|| CliError::Schema(format!("command {} does not produce {name}", m.command.name())))?;
    let fresh: Value = serde_json::from_str(fresh).map_err(|e| CliError::Compute(e.to_string()))?;
    let mut diff = Diff {
        compared: 0,
        count: 0,
        listed: Vec::new(),
        rel_tol,
    };
    diff.walk("/payload", &recorded["payload"], &fresh["payload"]);
    diff.walk("/provenance/seed", &recorded["provenance"]["seed"], &fresh["provenance"]["seed"]);
    let report = json!({
        "file": name,
        "rel_tol": rel_tol,
        "recorded_version": recorded["provenance"]["version"],
        "version": VERSION,
        "compared_values": diff.compared,
        "difference_count": diff.count,
        "differences": diff.listed,
    });
    if diff.count > 0 {
        Err(CliError::Drift(report))
    } else {
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diff(a: Value, b: Value, tol: f64) -> usize {
        let mut d = Diff {
            compared: 0,
            count: 0,
            listed: Vec::new(),
            rel_tol: tol,
        };
        d.walk("", &a, &b);
        d.count
    }

    #[test]
    fn numeric_tolerance_is_relative() {
        assert_eq!(diff(json!({"x": [1.0, 2.0]}), json!({"x": [1.0, 2.0]}), 0.0), 0);
        assert_eq!(diff(json!({"x": 1.0}), json!({"x": 1.0 + 1e-12}), 0.0), 1);
        assert_eq!(diff(json!({"x": 1.0}), json!({"x": 1.0 + 1e-12}), 1e-10), 0);
    }

    #[test]
    fn structural_changes_count() {
        assert_eq!(diff(json!({"x": 1, "y": true}), json!({"x": 1, "z": true}), 0.0), 2);
        assert_eq!(diff(json!([1, 2]), json!([1, 2, 3]), 0.0), 1);
        assert_eq!(diff(json!("a"), json!("b"), 0.0), 1);
    }
}
