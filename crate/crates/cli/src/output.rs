//! Artifact sinks and the run manifest.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Adds `"schema_version": 1` to a JSON object.
pub fn versioned<T: Serialize>(value: &T) -> Result<Value, CliError> {
    let mut obj = match serde_json::to_value(value).map_err(CliError::internal)? {
        Value::Object(obj) => obj,
        other => {
            let mut obj = Map::new();
            obj.insert("data".into(), other);
            obj
        }
    };
    obj.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    Ok(Value::Object(obj))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Where the artifacts of one run go. With an output directory every
/// artifact is a file in it; otherwise the primary artifact is printed on
/// stdout and everything else on stderr.
pub struct Sink {
    dir: Option<PathBuf>,
    written: Vec<String>,
    primary_done: bool,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| CliError::usage(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Self { dir, written: Vec::new(), primary_done: false })
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                fs::write(&path, content)
                    .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
            }
            None if !self.primary_done => {
                print!("{content}");
                std::io::stdout().flush().map_err(CliError::internal)?;
            }
            None => eprint!("{content}"),
        }
        self.primary_done = true;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(CliError::internal)?;
        text.push('\n');
        self.text(name, &text)
    }

    /// Writes `manifest.json`: the full configuration, its SHA-256, the
    /// artifacts written and command-specific notes.
    pub fn manifest<C: Serialize>(mut self, command: &str, config: &C, notes: Value) -> Result<(), CliError> {
        let config = serde_json::to_value(config).map_err(CliError::internal)?;
        let canonical = serde_json::to_string(&config).map_err(CliError::internal)?;
        let manifest = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "tool": env!("CARGO_PKG_NAME"),
            "tool_version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
            "config_hash": sha256_hex(canonical.as_bytes()),
            "outputs": self.written,
            "notes": notes,
        });
        self.primary_done = true;
        self.json("manifest.json", &manifest)
    }
}
