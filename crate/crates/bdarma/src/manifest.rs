//! Run manifests: what was run, with which settings, and what it produced.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::write_json;

/// File name of the manifest inside an output directory.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub bdarma: String,
    pub bdarma_core: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            bdarma: env!("CARGO_PKG_VERSION").into(),
            bdarma_core: bdarma_core::VERSION.into(),
        }
    }
}

/// An input file and its SHA-256.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::input(path, e))?;
        Ok(InputFile {
            path: path.to_path_buf(),
            sha256: hex(&Sha256::digest(&bytes)),
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Succeeded,
    Failed,
}

/// Written before any computation and rewritten when the run ends.
///
/// `config` is the fully resolved configuration; passing the manifest back
/// as `--config` to the same subcommand repeats the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seed: u64,
    pub versions: Versions,
    pub inputs: Vec<InputFile>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: RunStatus,
    pub error: Option<String>,
    pub outputs: Vec<PathBuf>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn begin<C: Serialize>(command: &str, argv: &[String], config: &C, seed: u64) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| Error::failed(format!("cannot record config: {e}")))?;
        Ok(RunManifest {
            command: command.into(),
            argv: argv.to_vec(),
            config,
            seed,
            versions: Versions::default(),
            inputs: Vec::new(),
            started_at: now(),
            finished_at: None,
            status: RunStatus::Running,
            error: None,
            outputs: Vec::new(),
        })
    }

    pub fn with_input(mut self, path: &Path) -> Result<Self> {
        self.inputs.push(InputFile::of(path)?);
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Marks the run finished, records its outputs and rewrites the file.
    pub fn finish(&mut self, path: &Path, outcome: std::result::Result<Vec<PathBuf>, &Error>) -> Result<()> {
        self.finished_at = Some(now());
        match outcome {
            Ok(outputs) => {
                self.status = RunStatus::Succeeded;
                self.outputs = outputs;
            }
            Err(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(e.to_string());
            }
        }
        self.write(path)
    }
}

/// The configuration inside a manifest, or the value itself when it is not one.
pub fn unwrap_config(value: Value, command: &str) -> Result<Value> {
    match value {
        Value::Object(mut map) if map.contains_key("versions") && map.contains_key("config") => {
            if let Some(Value::String(c)) = map.get("command") {
                if c != command {
                    return Err(Error::invalid(format!(
                        "manifest is from '{c}', not '{command}'"
                    )));
                }
            }
            Ok(map.remove("config").unwrap_or(Value::Null))
        }
        other => Ok(other),
    }
}

/// Overlays `top` onto `base`, recursing into objects.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, top) => *slot = top,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_overrides_leaves() {
        let mut base = json!({"a": 1, "s": {"x": 1, "y": 2}, "l": [1, 2]});
        merge(&mut base, json!({"s": {"y": 5}, "l": [3], "n": true}));
        assert_eq!(base, json!({"a": 1, "s": {"x": 1, "y": 5}, "l": [3], "n": true}));
    }

    #[test]
    fn manifests_unwrap_to_their_config() {
        let m = RunManifest::begin("study", &[], &json!({"seed": 3}), 3).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(unwrap_config(v.clone(), "study").unwrap(), json!({"seed": 3}));
        assert_eq!(unwrap_config(v, "fit").unwrap_err().exit_code(), 1);
        assert_eq!(unwrap_config(json!({"seed": 1}), "fit").unwrap(), json!({"seed": 1}));
    }

    #[test]
    fn input_hash_is_sha256() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            InputFile::of(&p).unwrap().sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
