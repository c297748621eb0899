//! The `run` and `report` subcommands: plan/train per mode, collect
//! successes, and emit the ablation accounting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::{Deserialize, Serialize};

use dexgen_core::catalog::Catalog;
use dexgen_core::metrics::{build_ablation_report, ModeOutcome, ABLATION_MODES};
use dexgen_learn::chain::{ChainOptions, StageArtifact};
use dexgen_learn::collect::{collect_with_fallback, CollectOptions};
use dexgen_learn::ppo::{desk_profile, paper_profile};
use dexgen_learn::tasks::load_task;
use dexgen_learn::trainer::stats_to_ndjson;
use dexgen_learn::trajstore;
use dexgen_learn::LearnError;

use crate::manifest::RunManifest;
use crate::{fail, BackendArg, ModeArg, ProfileArg, EXIT_TRAINING, EXIT_VALIDATION};

pub struct RunArgs {
    pub task: PathBuf,
    pub mode: ModeArg,
    pub profile: ProfileArg,
    pub seed: u64,
    pub workers: usize,
    pub backend: BackendArg,
    pub target: u64,
    pub cap: u64,
    pub updates: usize,
    pub out: PathBuf,
}

/// Per-mode accounting written next to the run artifacts.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModeOutcomeFile {
    pub mode: String,
    pub success_rate: f64,
    pub env_steps_to_target: u64,
    pub capped: bool,
    pub fallback_used: bool,
    pub successes: u64,
    pub attempts: u64,
    pub target_count: u64,
}

pub fn cmd_run(args: RunArgs) -> ExitCode {
    let catalog = Catalog::builtin();
    let task = match load_task(&args.task) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_VALIDATION, e.to_string()),
    };
    let mode = args.mode.to_chain();
    let mut ppo = match args.profile {
        ProfileArg::Paper => paper_profile(),
        ProfileArg::Desk => desk_profile(),
    };
    ppo.seed = args.seed;

    let chain_opts = ChainOptions {
        seed: args.seed,
        updates_per_stage: args.updates,
        step_budget: Some(args.cap),
        workers: args.workers,
        ..ChainOptions::default()
    };
    let collect_opts = CollectOptions {
        target_count: args.target,
        hard_cap_steps: args.cap,
        seed: args.seed,
        pos_jitter: chain_opts.pos_jitter,
        yaw_jitter: chain_opts.yaw_jitter,
        workers: args.workers,
    };

    if let Err(e) = std::fs::create_dir_all(&args.out) {
        return fail(EXIT_VALIDATION, e.to_string());
    }
    let backend_name = match args.backend {
        BackendArg::Fixture => "fixture",
        BackendArg::Http => "http",
        BackendArg::Synthetic => "synthetic",
    };
    let profile_name = match args.profile {
        ProfileArg::Paper => "paper",
        ProfileArg::Desk => "desk",
    };
    let mut manifest = RunManifest::new(
        &task.name,
        mode.as_str(),
        profile_name,
        args.seed,
        backend_name,
    );

    let result = collect_with_fallback(
        &task.config,
        &catalog,
        task.stages(),
        &task.specs,
        &ppo,
        mode,
        &chain_opts,
        &collect_opts,
    );

    let outcome_file;
    match result {
        Ok((chain, outcome)) => {
            // Stage artifacts: stats per trained stage, plans for planner
            // stages.
            for (k, run) in chain.runs.iter().enumerate() {
                match &run.artifact {
                    StageArtifact::Policy(train) => {
                        let path = args.out.join(format!("stats_stage_{k:02}.ndjson"));
                        if let Err(e) = std::fs::write(&path, stats_to_ndjson(&train.stats)) {
                            return fail(EXIT_VALIDATION, e.to_string());
                        }
                        manifest.add(&format!("stats_stage_{k:02}"), &path);
                        let policy_path = args.out.join(format!("policy_stage_{k:02}.json"));
                        let policy_json = serde_json::to_string(&train.bundle)
                            .expect("policy bundle serializes");
                        if let Err(e) = std::fs::write(&policy_path, policy_json) {
                            return fail(EXIT_VALIDATION, e.to_string());
                        }
                        manifest.add(&format!("policy_stage_{k:02}"), &policy_path);
                    }
                    StageArtifact::Plan { plan, .. } => {
                        let path = args.out.join(format!("plan_stage_{k:02}.json"));
                        if let Err(e) = std::fs::write(&path, plan.to_json()) {
                            return fail(EXIT_VALIDATION, e.to_string());
                        }
                        manifest.add(&format!("plan_stage_{k:02}"), &path);
                    }
                }
            }

            let traj_json = args.out.join("trajectories.json");
            if let Err(e) = std::fs::write(&traj_json, trajstore::to_json(&outcome.trajectories)) {
                return fail(EXIT_VALIDATION, e.to_string());
            }
            manifest.add("trajectories_json", &traj_json);
            let traj_bin = args.out.join("trajectories.bin");
            if let Err(e) = std::fs::write(
                &traj_bin,
                trajstore::to_binary(&outcome.trajectories, ppo.num_envs as u32),
            ) {
                return fail(EXIT_VALIDATION, e.to_string());
            }
            manifest.add("trajectories_bin", &traj_bin);

            outcome_file = ModeOutcomeFile {
                mode: mode.as_str().to_string(),
                success_rate: outcome.success_rate(),
                env_steps_to_target: if outcome.capped {
                    args.cap
                } else {
                    outcome.total_env_steps
                },
                capped: outcome.capped,
                fallback_used: outcome.fallback_used,
                successes: outcome.successes,
                attempts: outcome.attempts,
                target_count: args.target,
            };
        }
        Err(LearnError::CollectionExhausted {
            attempts,
            total_env_steps,
        }) => {
            // The capped outcome is still a reported result.
            let _ = total_env_steps;
            outcome_file = ModeOutcomeFile {
                mode: mode.as_str().to_string(),
                success_rate: 0.0,
                env_steps_to_target: args.cap,
                capped: true,
                fallback_used: true,
                successes: 0,
                attempts,
                target_count: args.target,
            };
            // Empty trajectory stores keep the artifact set uniform.
            let traj_json = args.out.join("trajectories.json");
            if let Err(e) = std::fs::write(&traj_json, trajstore::to_json(&[])) {
                return fail(EXIT_VALIDATION, e.to_string());
            }
            manifest.add("trajectories_json", &traj_json);
            let traj_bin = args.out.join("trajectories.bin");
            if let Err(e) =
                std::fs::write(&traj_bin, trajstore::to_binary(&[], ppo.num_envs as u32))
            {
                return fail(EXIT_VALIDATION, e.to_string());
            }
            manifest.add("trajectories_bin", &traj_bin);
        }
        Err(e) => return fail(EXIT_TRAINING, e.to_string()),
    }

    let outcome_path = args.out.join("mode_outcome.json");
    if let Err(e) = std::fs::write(
        &outcome_path,
        serde_json::to_string_pretty(&outcome_file).expect("outcome serializes") + "\n",
    ) {
        return fail(EXIT_VALIDATION, e.to_string());
    }
    manifest.add("mode_outcome", &outcome_path);

    match manifest.finalize(&args.out) {
        Ok(path) => {
            println!(
                "mode {} success_rate {:.3} env_steps {} capped {} -> {}",
                outcome_file.mode,
                outcome_file.success_rate,
                outcome_file.env_steps_to_target,
                outcome_file.capped,
                path.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_VALIDATION, e.to_string()),
    }
}

pub fn cmd_report(runs: &Path, task_name: &str, target: u64, out: &Path) -> ExitCode {
    let mut map = BTreeMap::new();
    for mode in ABLATION_MODES {
        let path = runs.join(mode).join("mode_outcome.json");
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                return fail(
                    EXIT_VALIDATION,
                    format!("missing outcome for mode {mode}: {} ({e})", path.display()),
                )
            }
        };
        let parsed: ModeOutcomeFile = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return fail(EXIT_VALIDATION, format!("{}: {e}", path.display())),
        };
        map.insert(
            mode.to_string(),
            ModeOutcome {
                success_rate: parsed.success_rate,
                env_steps_to_target: parsed.env_steps_to_target,
                capped: parsed.capped,
            },
        );
    }
    match build_ablation_report(task_name, &map, target) {
        Ok(report) => {
            if let Some(parent) = out.parent() {
                let _ = std::fs::create_dir_all(parent);
            }
            if let Err(e) = std::fs::write(out, report.to_json() + "\n") {
                return fail(EXIT_VALIDATION, e.to_string());
            }
            print!("{}", report.to_table());
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_VALIDATION, e.to_string()),
    }
}
