//! Regenerates the shipped fixture store from the deterministic responders.

use std::collections::BTreeMap;

use dexgen_core::catalog::Catalog;
use dexgen_core::gateway::{FixtureStore, ModelRequest, TemplateName};
use dexgen_core::metrics;
use dexgen_core::refine::corpus::corpus_scene;
use dexgen_core::refine::verifier::{scene_report, synthetic_verify};
use dexgen_core::refine::{apply_directive, Directive};
use dexgen_core::scenegen::proposal::{proposal_bindings, synthetic_proposal_text};

fn main() {
    let catalog = Catalog::builtin();
    let store = FixtureStore::open("crates/core/assets/fixtures");

    // Proposal playback for seeds 0..10.
    let bindings = proposal_bindings(&catalog);
    for seed in 0..10u64 {
        let text = synthetic_proposal_text(&catalog, seed);
        let request = ModelRequest::new(TemplateName::Proposal, bindings.clone(), seed);
        let key = store.record(&request, &text).unwrap();
        println!("recorded {key}");
    }

    // Scene-analysis playback: the refinement loops of two corpus scenes.
    for scene_index in [0usize, 1] {
        let mut config = corpus_scene(scene_index);
        for _iter in 0..5 {
            let report = scene_report(&config, &catalog).unwrap();
            let directives = synthetic_verify(&config, &catalog).unwrap();
            let text = if directives.is_empty() {
                "no corrections".to_string()
            } else {
                directives
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            let mut b = BTreeMap::new();
            b.insert("scene_report".to_string(), report);
            let request = ModelRequest::new(TemplateName::SceneAnalysis, b, 0);
            let key = store.record(&request, &text).unwrap();
            println!("recorded {key}");
            if directives.is_empty() {
                break;
            }
            for d in &directives {
                let d: &Directive = d;
                config = apply_directive(&config, d).unwrap();
            }
        }
    }

    // Recorded external-encoder vectors for the shipped task descriptions.
    let texts: Vec<String> = include_str!("../../../assets/task_descriptions.txt")
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    for encoder in ["encoder-a", "encoder-b", "encoder-c"] {
        let vectors: Vec<Vec<f64>> = metrics::embed_builtin(&texts)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                // Shift each recorded set deterministically so the three
                // encoders yield distinct diversity values.
                let mut values = v.values;
                let bias = match encoder {
                    "encoder-a" => 0.00,
                    "encoder-b" => 0.02,
                    _ => 0.05,
                };
                for (k, x) in values.iter_mut().enumerate() {
                    *x += bias * (((i + k) % 7) as f64 / 7.0);
                }
                values
            })
            .collect();
        metrics::record_external_vectors(&store, encoder, &texts, &vectors).unwrap();
        println!("recorded embeddings for {encoder}");
    }
}
