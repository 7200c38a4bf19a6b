//! Content hashes and run descriptions embedded in output files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of an id list, one id per line (each line LF-terminated).
pub fn ids_sha256<S: AsRef<str>>(ids: &[S]) -> String {
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update(id.as_ref().as_bytes());
        hasher.update(b"\n");
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// The effective configuration of a run plus the hash of every input.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub config: BTreeMap<String, serde_json::Value>,
    pub inputs: BTreeMap<String, String>,
}

impl RunInfo {
    pub fn new(command: impl Into<String>) -> Self {
        RunInfo {
            command: command.into(),
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let value = serde_json::to_value(value).expect("config values serialize");
        self.config.insert(key.to_owned(), value);
        self
    }

    /// Records the sha256 of the file at `path` under `name`.
    pub fn input(&mut self, name: &str, path: impl AsRef<Path>) -> Result<&mut Self> {
        let path = path.as_ref();
        let hash = file_sha256(path)?;
        self.inputs.insert(name.to_owned(), hash);
        Ok(self)
    }

    /// Single-line JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run info serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digests() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(ids_sha256(&["abc"]), sha256_hex(b"abc\n"));
        assert_eq!(ids_sha256::<&str>(&[]), sha256_hex(b""));
    }

    #[test]
    fn run_info_is_ordered() {
        let mut run = RunInfo::new("score");
        run.set("seed", 42).set("measure", "invppl");
        assert_eq!(
            run.to_json(),
            r#"{"command":"score","config":{"measure":"invppl","seed":42},"inputs":{}}"#
        );
    }
}
