//! Run manifest: every artifact a pipeline run emitted, verified to exist
//! when finalized.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: u64,
    pub backend: String,
    pub mode: String,
    pub profile: String,
    pub tool_version: String,
    pub paths: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(task: &str, mode: &str, profile: &str, seed: u64, backend: &str) -> RunManifest {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            run_id: format!("{task}-{mode}-s{seed}-{stamp}"),
            seed,
            backend: backend.to_string(),
            mode: mode.to_string(),
            profile: profile.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            paths: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, key: &str, path: &Path) {
        self.paths
            .insert(key.to_string(), path.display().to_string());
    }

    /// Verify every listed artifact exists, then write the manifest itself.
    pub fn finalize(&self, out: &Path) -> std::io::Result<PathBuf> {
        for (key, path) in &self.paths {
            if !Path::new(path).exists() {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("manifest entry '{key}' missing: {path}"),
                ));
            }
        }
        let path = out.join("manifest.json");
        std::fs::write(
            &path,
            serde_json::to_string_pretty(self).expect("manifest serializes") + "\n",
        )?;
        Ok(path)
    }
}
