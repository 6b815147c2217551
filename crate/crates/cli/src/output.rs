//! Artifact writing. JSON files get a top-level `meta` object; CSV files start
//! with a `# config_hash=…,seed=…` comment line.

use std::fs;
use std::path::{Path, PathBuf};

use qctrl_core::rounding::schedule_from_csv;
use qctrl_core::ControlField;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct Outputs {
    pub dir: PathBuf,
    pub config_hash: String,
    pub seed: u64,
}

impl Outputs {
    pub fn new(dir: impl Into<PathBuf>, config_hash: String, seed: u64) -> Result<Self, CliError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| CliError::Write { path: dir.display().to_string(), source })?;
        Ok(Self { dir, config_hash, seed })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn comment(&self) -> String {
        format!("config_hash={},seed={}", self.config_hash, self.seed)
    }

    fn meta(&self) -> Value {
        json!({ "config_hash": self.config_hash, "seed": self.seed })
    }

    /// Objects gain a `meta` key; anything else is wrapped as `{meta, data}`.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let body = serde_json::to_value(value).map_err(qctrl_core::Error::from)?;
        let doc = match body {
            Value::Object(mut map) => {
                map.insert("meta".into(), self.meta());
                Value::Object(map)
            }
            other => {
                let mut map = Map::new();
                map.insert("meta".into(), self.meta());
                map.insert("data".into(), other);
                Value::Object(map)
            }
        };
        let mut text = serde_json::to_string_pretty(&doc).map_err(qctrl_core::Error::from)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|source| CliError::Write { path: path.display().to_string(), source })?;
        Ok(path)
    }
}

/// Reads a control from a schedule CSV or from JSON, with or without a `meta` envelope.
pub fn load_control(path: &Path) -> Result<ControlField, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read control {}: {e}", path.display())))?;
    let bad = |e: String| CliError::Config(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return schedule_from_csv(&text).map_err(|e| bad(e.to_string()));
    }
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| bad(format!("line {} column {}: {e}", e.line(), e.column())))?;
    if let Value::Object(map) = &mut doc {
        map.remove("meta");
        if let Some(inner) = map.remove("data") {
            doc = inner;
        }
    }
    serde_json::from_value(doc).map_err(|e| bad(e.to_string()))
}

/// `iter,objective,grad_norm` rows, 0-based iteration index.
pub fn trace_csv(objective: &[f64], grad_norm: &[f64], comment: &str) -> String {
    let mut s = format!("# {comment}\niter,objective,grad_norm\n");
    for (i, f) in objective.iter().enumerate() {
        match grad_norm.get(i) {
            Some(g) => s.push_str(&format!("{i},{f:.16e},{g:.16e}\n")),
            None => s.push_str(&format!("{i},{f:.16e},\n")),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = Outputs::new(dir.path(), "abc".into(), 7).unwrap();
        let u = ControlField::from_rows(&[vec![0.25, 1.0], vec![0.5, 0.0]]).unwrap();
        let p = out.write_json("u.json", &u).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"config_hash\": \"abc\""));
        assert_eq!(load_control(&p).unwrap(), u);
        let wrapped = out.write_json("n.json", &3.5).unwrap();
        assert!(fs::read_to_string(wrapped).unwrap().contains("\"data\": 3.5"));
    }

    #[test]
    fn trace_rows() {
        let csv = trace_csv(&[1.0, 0.5], &[0.1], "x");
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(3).unwrap().ends_with(','));
    }
}
