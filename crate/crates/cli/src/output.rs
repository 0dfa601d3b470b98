use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Single writer for everything a command emits.
pub struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Writes `payload` merged into the standard record envelope.
    pub fn write_json<T: Serialize>(&mut self, name: &str, cfg: &RunConfig, payload: &T) -> CliResult<PathBuf> {
        let record = envelope(cfg, payload);
        let mut text = serde_json::to_string_pretty(&record).expect("JSON values always serialise");
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// `{schema_version, tool, version, config, …payload}`.
pub fn envelope<T: Serialize>(cfg: &RunConfig, payload: &T) -> Value {
    let mut map = Map::new();
    map.insert("schema_version".into(), json!(SCHEMA_VERSION));
    map.insert("tool".into(), json!("exitmass"));
    map.insert("version".into(), json!(exitmass_core::VERSION));
    map.insert("config".into(), serde_json::to_value(cfg).expect("config serialises"));
    match serde_json::to_value(payload).expect("payload serialises") {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("data".into(), other);
        }
    }
    Value::Object(map)
}

/// Formats a float for CSV; empty for missing values.
pub fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}
