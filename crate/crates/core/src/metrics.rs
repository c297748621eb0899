//! Task-diversity metric, ablation accounting, and report emission.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{fnv1a64, FixtureStore, ENV_MODEL_KEY, ENV_MODEL_URL};

pub const BUILTIN_EMBEDDER_ID: &str = "builtin_hash_ngram";
pub const BUILTIN_DIM: usize = 512;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least two vectors, got {0}")]
    TooFewVectors(usize),
    #[error("vector {0} has zero norm")]
    ZeroNorm(usize),
    #[error("dimension mismatch: vector {index} has {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("texts must be nonempty")]
    NoTexts,
    #[error("external embedder unavailable ({0}); run with the builtin embedder or record fixtures")]
    ExternalUnavailable(String),
    #[error("ablation report requires mode '{0}'")]
    MissingMode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub embedder_id: String,
}

/// Character-trigram hashing embedder: deterministic, offline, L2-normalized.
pub fn embed_builtin(texts: &[String]) -> Result<Vec<EmbeddingVector>, MetricsError> {
    if texts.is_empty() {
        return Err(MetricsError::NoTexts);
    }
    Ok(texts
        .iter()
        .map(|text| {
            let mut values = vec![0.0_f64; BUILTIN_DIM];
            let lowered = text.to_lowercase();
            let chars: Vec<char> = lowered.chars().collect();
            for window in chars.windows(3) {
                let gram: String = window.iter().collect();
                let bucket = (fnv1a64(gram.as_bytes()) % BUILTIN_DIM as u64) as usize;
                values[bucket] += 1.0;
            }
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in &mut values {
                    *v /= norm;
                }
            }
            EmbeddingVector {
                values,
                embedder_id: BUILTIN_EMBEDDER_ID.to_string(),
            }
        })
        .collect())
}

/// Trigram bucket indices for a text; exposed so tests can verify
/// collision-freeness of constructed pairs.
pub fn builtin_buckets(text: &str) -> Vec<usize> {
    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    chars
        .windows(3)
        .map(|w| {
            let gram: String = w.iter().collect();
            (fnv1a64(gram.as_bytes()) % BUILTIN_DIM as u64) as usize
        })
        .collect()
}

/// Fixture key for a recorded external-encoder embedding batch.
pub fn embedding_fixture_key(embedder_id: &str, texts: &[String]) -> String {
    let mut buf = Vec::new();
    for t in texts {
        buf.extend_from_slice(t.as_bytes());
        buf.push(0x1e);
    }
    format!("embed-{embedder_id}-{:016x}", fnv1a64(&buf))
}

#[derive(Serialize, Deserialize)]
struct EmbeddingFixture {
    embedder_id: String,
    vectors: Vec<Vec<f64>>,
}

/// Record external-encoder vectors so offline runs can replay them.
pub fn record_external_vectors(
    store: &FixtureStore,
    embedder_id: &str,
    texts: &[String],
    vectors: &[Vec<f64>],
) -> Result<(), MetricsError> {
    let fixture = EmbeddingFixture {
        embedder_id: embedder_id.to_string(),
        vectors: vectors.to_vec(),
    };
    store
        .record_named(
            &embedding_fixture_key(embedder_id, texts),
            &serde_json::to_string_pretty(&fixture).expect("fixture serializes"),
        )
        .map_err(|e| MetricsError::ExternalUnavailable(e.to_string()))
}

/// External-encoder embeddings: recorded fixtures first, then the live
/// service configured through the gateway environment variables.
pub fn embed_external(
    texts: &[String],
    embedder_id: &str,
    store: Option<&FixtureStore>,
) -> Result<Vec<EmbeddingVector>, MetricsError> {
    if texts.is_empty() {
        return Err(MetricsError::NoTexts);
    }
    if let Some(store) = store {
        if let Ok(raw) = store.lookup_named(&embedding_fixture_key(embedder_id, texts)) {
            let fixture: EmbeddingFixture = serde_json::from_str(&raw)
                .map_err(|e| MetricsError::ExternalUnavailable(e.to_string()))?;
            return Ok(fixture
                .vectors
                .into_iter()
                .map(|values| EmbeddingVector {
                    values,
                    embedder_id: embedder_id.to_string(),
                })
                .collect());
        }
    }
    let (Ok(url), Ok(key)) = (std::env::var(ENV_MODEL_URL), std::env::var(ENV_MODEL_KEY)) else {
        return Err(MetricsError::ExternalUnavailable(format!(
            "no recorded vectors and {ENV_MODEL_URL}/{ENV_MODEL_KEY} unset"
        )));
    };
    let body = serde_json::json!({ "model": embedder_id, "input": texts });
    let mut response = ureq::post(&url)
        .header("authorization", &format!("Bearer {key}"))
        .send_json(&body)
        .map_err(|e| MetricsError::ExternalUnavailable(e.to_string()))?;
    #[derive(Deserialize)]
    struct Entry {
        embedding: Vec<f64>,
    }
    #[derive(Deserialize)]
    struct Payload {
        data: Vec<Entry>,
    }
    let payload: Payload = response
        .body_mut()
        .read_json()
        .map_err(|e| MetricsError::ExternalUnavailable(e.to_string()))?;
    Ok(payload
        .data
        .into_iter()
        .map(|e| EmbeddingVector {
            values: e.embedding,
            embedder_id: embedder_id.to_string(),
        })
        .collect())
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv)
}

/// Mean pairwise cosine similarity over all unordered pairs; lower means a
/// more diverse set.
pub fn diversity(vectors: &[EmbeddingVector]) -> Result<f64, MetricsError> {
    if vectors.len() < 2 {
        return Err(MetricsError::TooFewVectors(vectors.len()));
    }
    let dim = vectors[0].values.len();
    for (i, v) in vectors.iter().enumerate() {
        if v.values.len() != dim {
            return Err(MetricsError::DimensionMismatch {
                index: i,
                found: v.values.len(),
                expected: dim,
            });
        }
        if v.values.iter().map(|x| x * x).sum::<f64>().sqrt() == 0.0 {
            return Err(MetricsError::ZeroNorm(i));
        }
    }
    let n = vectors.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += cosine(&vectors[i].values, &vectors[j].values);
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Four-decimal formatting used everywhere diversity is printed.
pub fn format_diversity(value: f64) -> String {
    format!("{value:.4}")
}

pub const ABLATION_MODES: [&str; 4] = ["no_subgoal", "subgoals", "freeze_dofs", "mp_hybrid"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeOutcome {
    pub success_rate: f64,
    pub env_steps_to_target: u64,
    /// True when the run hit its step cap before reaching the target count;
    /// the steps field then reports the cap, never zero.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub task_name: String,
    pub target_count: u64,
    pub modes: BTreeMap<String, ModeOutcome>,
}

pub fn build_ablation_report(
    task_name: &str,
    runs: &BTreeMap<String, ModeOutcome>,
    target_count: u64,
) -> Result<AblationReport, MetricsError> {
    for mode in ABLATION_MODES {
        if !runs.contains_key(mode) {
            return Err(MetricsError::MissingMode(mode.to_string()));
        }
    }
    Ok(AblationReport {
        task_name: task_name.to_string(),
        target_count,
        modes: runs.clone(),
    })
}

impl AblationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "task: {}  (target successes: {})\n{:<12} {:>12} {:>18} {:>7}\n",
            self.task_name, self.target_count, "mode", "success_rate", "env_steps", "capped"
        );
        for mode in ABLATION_MODES {
            let m = &self.modes[mode];
            out.push_str(&format!(
                "{:<12} {:>12.4} {:>18} {:>7}\n",
                mode,
                m.success_rate,
                m.env_steps_to_target,
                if m.capped { "yes" } else { "no" }
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_embed_identically() {
        let vs = embed_builtin(&["open the cabinet".into(), "open the cabinet".into()]).unwrap();
        assert_eq!(vs[0], vs[1]);
    }

    #[test]
    fn builtin_vectors_are_unit_norm() {
        let vs = embed_builtin(&["grasp the bottle".into(), "rotate a tennis ball".into()]).unwrap();
        for v in vs {
            let norm = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn disjoint_alphabet_strings_are_orthogonal() {
        // Verified collision-free by direct bucket enumeration before
        // asserting the cosine.
        let a = "aaaa".to_string();
        let b = "zzzz".to_string();
        let ba: std::collections::BTreeSet<usize> = builtin_buckets(&a).into_iter().collect();
        let bb: std::collections::BTreeSet<usize> = builtin_buckets(&b).into_iter().collect();
        assert!(ba.is_disjoint(&bb), "constructed pair must not collide");
        let vs = embed_builtin(&[a, b]).unwrap();
        assert!(cosine(&vs[0].values, &vs[1].values).abs() < 1e-12);
    }

    #[test]
    fn diversity_of_copies_is_one() {
        let vs = embed_builtin(&vec!["push the plate".to_string(); 4]).unwrap();
        assert!((diversity(&vs).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn diversity_of_orthogonal_pair_is_zero() {
        let u = EmbeddingVector {
            values: vec![1.0, 0.0],
            embedder_id: "t".into(),
        };
        let v = EmbeddingVector {
            values: vec![0.0, 1.0],
            embedder_id: "t".into(),
        };
        assert_eq!(diversity(&[u, v]).unwrap(), 0.0);
    }

    #[test]
    fn diversity_matches_three_pair_enumeration() {
        let vs = embed_builtin(&[
            "open the microwave door".into(),
            "put the apple into the bowl".into(),
            "push the plate across the table".into(),
        ])
        .unwrap();
        let expected = (cosine(&vs[0].values, &vs[1].values)
            + cosine(&vs[0].values, &vs[2].values)
            + cosine(&vs[1].values, &vs[2].values))
            / 3.0;
        assert!((diversity(&vs).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn diversity_is_permutation_and_scale_invariant() {
        let mut vs = embed_builtin(&[
            "grasp the cup".into(),
            "close the drawer".into(),
            "move the banana".into(),
        ])
        .unwrap();
        let original = diversity(&vs).unwrap();
        vs.swap(0, 2);
        assert!((diversity(&vs).unwrap() - original).abs() < 1e-12);
        for v in &mut vs {
            for x in &mut v.values {
                *x *= 3.5;
            }
        }
        assert!((diversity(&vs).unwrap() - original).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_vector_is_an_error() {
        let u = EmbeddingVector {
            values: vec![0.0, 0.0],
            embedder_id: "t".into(),
        };
        let v = EmbeddingVector {
            values: vec![1.0, 0.0],
            embedder_id: "t".into(),
        };
        assert!(matches!(
            diversity(&[u, v]),
            Err(MetricsError::ZeroNorm(0))
        ));
    }

    #[test]
    fn format_uses_four_decimals() {
        assert_eq!(format_diversity(0.288), "0.2880");
        assert_eq!(format_diversity(0.31561), "0.3156");
    }

    #[test]
    fn report_requires_all_four_modes() {
        let mut runs = BTreeMap::new();
        for mode in ["no_subgoal", "subgoals", "freeze_dofs"] {
            runs.insert(
                mode.to_string(),
                ModeOutcome {
                    success_rate: 0.5,
                    env_steps_to_target: 1000,
                    capped: false,
                },
            );
        }
        assert!(matches!(
            build_ablation_report("pick", &runs, 100),
            Err(MetricsError::MissingMode(_))
        ));
        runs.insert(
            "mp_hybrid".to_string(),
            ModeOutcome {
                success_rate: 0.9,
                env_steps_to_target: 500,
                capped: false,
            },
        );
        let report = build_ablation_report("pick", &runs, 100).unwrap();
        assert_eq!(report.modes.len(), 4);
        assert!(report.to_table().contains("mp_hybrid"));
    }

    #[test]
    fn capped_run_is_passed_through_not_zeroed() {
        let mut runs = BTreeMap::new();
        for mode in ABLATION_MODES {
            runs.insert(
                mode.to_string(),
                ModeOutcome {
                    success_rate: 0.0,
                    env_steps_to_target: 2_000_000,
                    capped: mode == "no_subgoal",
                },
            );
        }
        let report = build_ablation_report("pick", &runs, 100).unwrap();
        let capped = &report.modes["no_subgoal"];
        assert!(capped.capped);
        assert_eq!(capped.env_steps_to_target, 2_000_000);
    }
}
