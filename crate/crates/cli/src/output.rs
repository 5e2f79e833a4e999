//! Result files. JSON results carry a SHA-256 of their payload; wall-clock
//! fields are moved out of the payload first so the hash depends only on
//! `(config, seed)`.

use crate::error::{CliError, CliResult};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

const TIMING_KEYS: [&str; 1] = ["wall_time_ms"];

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: PathBuf) -> CliResult<Self> {
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(OutDir { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        log::info!("wrote {}", p.display());
        Ok(p)
    }

    /// Writes `{command, sha256, payload, timing}` and returns the hash.
    pub fn write_result(
        &self,
        name: &str,
        command: &str,
        payload: &impl Serialize,
    ) -> CliResult<String> {
        let mut payload = serde_json::to_value(payload).map_err(smalldev::Error::from)?;
        let mut timing = Map::new();
        extract_timing(&mut payload, "", &mut timing);
        let hash = payload_hash(&payload);
        let generated = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        timing.insert("generated_unix".into(), json!(generated));
        let doc = json!({
            "command": command,
            "sha256": hash,
            "payload": payload,
            "timing": timing,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(smalldev::Error::from)?;
        self.write(name, format!("{text}\n").as_bytes())?;
        Ok(hash)
    }
}

/// Moves timing fields out of `v`, keyed by their JSON pointer.
fn extract_timing(v: &mut Value, pointer: &str, out: &mut Map<String, Value>) {
    match v {
        Value::Object(map) => {
            for key in TIMING_KEYS {
                if let Some(t) = map.remove(key) {
                    out.insert(format!("{pointer}/{key}"), t);
                }
            }
            for (k, child) in map.iter_mut() {
                extract_timing(child, &format!("{pointer}/{k}"), out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter_mut().enumerate() {
                extract_timing(child, &format!("{pointer}/{i}"), out);
            }
        }
        _ => {}
    }
}

/// SHA-256 of the compact serialization (`serde_json` keeps map keys sorted).
pub fn payload_hash(payload: &Value) -> String {
    let bytes = serde_json::to_vec(payload).expect("values always serialize");
    hex::encode(Sha256::digest(&bytes))
}
