//! Recorded-response store: one canonical JSON file per request key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GatewayError, ModelRequest, TemplateName};

const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

/// FNV-1a over a byte stream; stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Canonical serialization of bindings: sorted keys joined with unit/record
/// separators so recordings survive field reordering.
fn canonical_bindings(bindings: &BTreeMap<String, String>) -> Vec<u8> {
    let mut buf = Vec::new();
    for (k, v) in bindings {
        buf.extend_from_slice(k.as_bytes());
        buf.push(0x1f);
        buf.extend_from_slice(v.as_bytes());
        buf.push(0x1e);
    }
    buf
}

/// Lookup key: `(template_name, hash of bindings, seed)`.
pub fn fixture_key(
    template: TemplateName,
    bindings: &BTreeMap<String, String>,
    seed: u64,
) -> String {
    let hash = fnv1a64(&canonical_bindings(bindings));
    format!("{template}-{hash:016x}-{seed}")
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureRecord {
    key: String,
    template: TemplateName,
    seed: u64,
    text: String,
}

/// Directory-backed store; read-only at run time, single-writer when
/// recording.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn open(dir: impl Into<PathBuf>) -> FixtureStore {
        FixtureStore { dir: dir.into() }
    }

    /// The fixture set shipped with the repository.
    pub fn builtin_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/fixtures")
    }

    pub fn builtin() -> FixtureStore {
        FixtureStore::open(Self::builtin_dir())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn lookup(&self, request: &ModelRequest) -> Result<String, GatewayError> {
        let key = fixture_key(request.template, &request.bindings, request.seed);
        let path = self.path_for(&key);
        let raw = std::fs::read_to_string(&path).map_err(|_| GatewayError::FixtureMiss {
            key: key.clone(),
            dir: self.dir.display().to_string(),
        })?;
        let record: FixtureRecord =
            serde_json::from_str(&raw).map_err(|e| GatewayError::FixtureStore {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
        Ok(record.text)
    }

    /// Record a response under the request's key (recording mode).
    pub fn record(&self, request: &ModelRequest, text: &str) -> Result<String, GatewayError> {
        let key = fixture_key(request.template, &request.bindings, request.seed);
        self.record_raw(&key, request.template, request.seed, text)?;
        Ok(key)
    }

    fn record_raw(
        &self,
        key: &str,
        template: TemplateName,
        seed: u64,
        text: &str,
    ) -> Result<(), GatewayError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| GatewayError::FixtureStore {
            path: self.dir.display().to_string(),
            detail: e.to_string(),
        })?;
        let record = FixtureRecord {
            key: key.to_string(),
            template,
            seed,
            text: text.to_string(),
        };
        let path = self.path_for(key);
        let json = serde_json::to_string_pretty(&record).expect("fixture record serializes");
        std::fs::write(&path, json + "\n").map_err(|e| GatewayError::FixtureStore {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// Raw string-keyed lookup for non-template payloads (embedding vectors).
    pub fn lookup_named(&self, key: &str) -> Result<String, GatewayError> {
        let path = self.dir.join(format!("{key}.json"));
        std::fs::read_to_string(&path).map_err(|_| GatewayError::FixtureMiss {
            key: key.to_string(),
            dir: self.dir.display().to_string(),
        })
    }

    pub fn record_named(&self, key: &str, json: &str) -> Result<(), GatewayError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| GatewayError::FixtureStore {
            path: self.dir.display().to_string(),
            detail: e.to_string(),
        })?;
        let path = self.dir.join(format!("{key}.json"));
        std::fs::write(&path, json).map_err(|e| GatewayError::FixtureStore {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(seed: u64) -> ModelRequest {
        let mut b = BTreeMap::new();
        b.insert("scene_report".to_string(), "empty scene".to_string());
        ModelRequest::new(TemplateName::SceneAnalysis, b, seed)
    }

    #[test]
    fn key_is_stable_under_binding_insertion_order() {
        let mut a = BTreeMap::new();
        a.insert("x".to_string(), "1".to_string());
        a.insert("y".to_string(), "2".to_string());
        let mut b = BTreeMap::new();
        b.insert("y".to_string(), "2".to_string());
        b.insert("x".to_string(), "1".to_string());
        assert_eq!(
            fixture_key(TemplateName::Proposal, &a, 7),
            fixture_key(TemplateName::Proposal, &b, 7)
        );
    }

    #[test]
    fn playback_round_trips_and_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(tmp.path());
        let req = request(7);
        store.record(&req, "bottle - scale 0.5").unwrap();
        let first = store.lookup(&req).unwrap();
        let second = store.lookup(&req).unwrap();
        assert_eq!(first, "bottle - scale 0.5");
        assert_eq!(first, second);
    }

    #[test]
    fn miss_reports_the_key() {
        let tmp = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(tmp.path());
        let err = store.lookup(&request(9)).unwrap_err();
        match err {
            GatewayError::FixtureMiss { key, .. } => {
                assert!(key.starts_with("scene_analysis-"));
                assert!(key.ends_with("-9"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn different_seeds_use_different_keys() {
        assert_ne!(
            fixture_key(TemplateName::Proposal, &BTreeMap::new(), 1),
            fixture_key(TemplateName::Proposal, &BTreeMap::new(), 2)
        );
    }
}
