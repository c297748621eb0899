//! `dexgen`: command-line entry point for the generation pipeline.
//!
//! Exit codes: 0 ok, 2 validation, 3 backend/configuration, 4 refinement,
//! 5 training.

mod manifest;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dexgen_core::catalog::Catalog;
use dexgen_core::gateway::{FixtureStore, Gateway};
use dexgen_core::metrics;
use dexgen_core::refine::{
    refine_loop, render_views, synthetic_responder, write_ppm, write_svg, ModelVerifier,
    SceneVerifier, SyntheticVerifier, Viewpoint,
};
use dexgen_core::scenegen::lint::{error_count, lint_scene, lint_score};
use dexgen_core::scenegen::{load_config, propose_task, serialize_config};
use dexgen_learn::chain::ChainMode;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_BACKEND: u8 = 3;
pub const EXIT_REFINEMENT: u8 = 4;
pub const EXIT_TRAINING: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Fixture,
    Http,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Paper,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "no_subgoal", alias = "no-subgoal")]
    NoSubgoal,
    #[value(name = "subgoals")]
    Subgoals,
    #[value(name = "freeze_dofs", alias = "freeze-dofs")]
    FreezeDofs,
    #[value(name = "mp_hybrid", alias = "mp-hybrid")]
    MpHybrid,
}

impl ModeArg {
    pub fn to_chain(self) -> ChainMode {
        match self {
            ModeArg::NoSubgoal => ChainMode::NoSubgoal,
            ModeArg::Subgoals => ChainMode::Subgoals,
            ModeArg::FreezeDofs => ChainMode::FreezeDofs,
            ModeArg::MpHybrid => ChainMode::MpHybrid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifierArg {
    Synthetic,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderArg {
    Builtin,
    External,
}

#[derive(Debug, Parser)]
#[command(name = "dexgen", version, about = "Desk-scale generative manipulation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GatewayArgs {
    /// Model backend.
    #[arg(long, value_enum, default_value_t = BackendArg::Fixture)]
    backend: BackendArg,
    /// Fixture store directory (defaults to the shipped store).
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

impl GatewayArgs {
    fn build(&self, catalog: &Catalog) -> Result<Gateway, String> {
        match self.backend {
            BackendArg::Fixture => {
                let store = match &self.fixtures {
                    Some(dir) => FixtureStore::open(dir.clone()),
                    None => FixtureStore::builtin(),
                };
                Ok(Gateway::fixture(store))
            }
            BackendArg::Synthetic => Ok(Gateway::synthetic(synthetic_responder(catalog.clone()))),
            BackendArg::Http => Gateway::http_from_env().map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Propose a task from the asset catalog, retrying until valid.
    Propose {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampling temperature (defaults to the proposal temperature).
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long, default_value_t = 3)]
        retries: u32,
        #[command(flatten)]
        gateway: GatewayArgs,
        #[arg(long, default_value = "runs/propose")]
        out: PathBuf,
    },
    /// Lint a scene configuration against the catalog.
    Lint {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Iteratively refine a scene until it lints clean.
    Refine {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = VerifierArg::Synthetic)]
        verifier: VerifierArg,
        #[arg(long, default_value_t = 5)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        gateway: GatewayArgs,
        #[arg(long, default_value = "runs/refine")]
        out: PathBuf,
    },
    /// Render the three fixed viewpoints of a scene.
    Render {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, default_value = "runs/render")]
        out: PathBuf,
        /// Also emit SVG line renders.
        #[arg(long)]
        svg: bool,
    },
    /// Run the pipeline on a task directory: plan/train, collect, report.
    Run {
        /// Task directory containing task.yaml and stages/.
        #[arg(long)]
        task: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::MpHybrid)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
        profile: ProfileArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        gateway: GatewayArgs,
        /// Successful trajectories to collect.
        #[arg(long, default_value_t = 100)]
        target: u64,
        /// Hard cap on total env steps.
        #[arg(long, default_value_t = 5_000_000)]
        cap: u64,
        /// Per-stage PPO update budget.
        #[arg(long, default_value_t = 120)]
        updates: usize,
        #[arg(long, default_value = "runs/run")]
        out: PathBuf,
    },
    /// Build the four-mode ablation report from saved run outputs.
    Report {
        /// Directory containing <mode>/mode_outcome.json entries.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        task_name: String,
        #[arg(long, default_value_t = 100)]
        target: u64,
        #[arg(long, default_value = "runs/report.json")]
        out: PathBuf,
    },
    /// Mean pairwise cosine similarity of task descriptions.
    Diversity {
        /// Text file, one description per line.
        #[arg(long)]
        texts: PathBuf,
        #[arg(long, value_enum, default_value_t = EmbedderArg::Builtin)]
        embedder: EmbedderArg,
        /// Average absolute cosine instead of signed cosine.
        #[arg(long)]
        abs: bool,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
}

fn load_catalog(path: &Option<PathBuf>) -> Result<Catalog, String> {
    match path {
        Some(p) => Catalog::load(p).map_err(|e| e.to_string()),
        None => Ok(Catalog::builtin()),
    }
}

pub fn fail(code: u8, message: String) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Propose {
            catalog,
            seed,
            temperature,
            retries,
            gateway,
            out,
        } => {
            let catalog = match load_catalog(&catalog) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_VALIDATION, e),
            };
            let gw = match gateway.build(&catalog) {
                Ok(g) => g,
                Err(e) => return fail(EXIT_BACKEND, e),
            };
            match propose_task(&catalog, &gw, seed, retries, temperature) {
                Ok((proposal, attempts)) => {
                    if let Err(e) = std::fs::create_dir_all(&out) {
                        return fail(EXIT_VALIDATION, e.to_string());
                    }
                    let path = out.join("proposal.txt");
                    if let Err(e) = std::fs::write(&path, proposal.to_text()) {
                        return fail(EXIT_VALIDATION, e.to_string());
                    }
                    println!(
                        "proposal '{}' accepted after {attempts} retries -> {}",
                        proposal.task_name,
                        path.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    let code = match &e {
                        dexgen_core::scenegen::proposal::ProposalError::Gateway(_) => EXIT_BACKEND,
                        _ => EXIT_VALIDATION,
                    };
                    fail(code, e.to_string())
                }
            }
        }
        Command::Lint {
            config,
            catalog,
            json,
        } => {
            let catalog = match load_catalog(&catalog) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_VALIDATION, e),
            };
            let scene = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_VALIDATION, e.to_string()),
            };
            match lint_scene(&scene, &catalog) {
                Ok(findings) => {
                    if json {
                        println!(
                            "{}",
                            serde_json::to_string_pretty(&findings).expect("findings serialize")
                        );
                    } else {
                        for f in &findings {
                            println!(
                                "{:?} [{:?}] {}: {}{}",
                                f.severity,
                                f.code,
                                f.object,
                                f.detail,
                                f.suggested
                                    .as_ref()
                                    .map(|d| format!("  (suggest: {d})"))
                                    .unwrap_or_default()
                            );
                        }
                        println!(
                            "score {} ({} errors)",
                            lint_score(&findings),
                            error_count(&findings)
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_VALIDATION, e.to_string()),
            }
        }
        Command::Refine {
            config,
            catalog,
            verifier,
            max_iters,
            seed,
            gateway,
            out,
        } => {
            let catalog = match load_catalog(&catalog) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_VALIDATION, e),
            };
            let scene = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_VALIDATION, e.to_string()),
            };
            let model_verifier;
            let verifier: &dyn SceneVerifier = match verifier {
                VerifierArg::Synthetic => &SyntheticVerifier,
                VerifierArg::Model => {
                    let gw = match gateway.build(&catalog) {
                        Ok(g) => g,
                        Err(e) => return fail(EXIT_BACKEND, e),
                    };
                    model_verifier = ModelVerifier::new(Arc::new(gw), seed);
                    &model_verifier
                }
            };
            if let Err(e) = std::fs::create_dir_all(&out) {
                return fail(EXIT_VALIDATION, e.to_string());
            }
            match refine_loop(&scene, &catalog, verifier, max_iters) {
                Ok(outcome) => {
                    let refined_path = out.join("refined.yaml");
                    let trace_path = out.join("trace.json");
                    if let Err(e) =
                        std::fs::write(&refined_path, serialize_config(&outcome.config))
                    {
                        return fail(EXIT_VALIDATION, e.to_string());
                    }
                    if let Err(e) = std::fs::write(&trace_path, outcome.trace.to_json()) {
                        return fail(EXIT_VALIDATION, e.to_string());
                    }
                    match render_views(&outcome.config, &catalog) {
                        Ok(views) => {
                            for view in &views {
                                let path = out.join(format!("{}.ppm", view.viewpoint.label()));
                                if let Err(e) = std::fs::write(&path, write_ppm(view)) {
                                    return fail(EXIT_VALIDATION, e.to_string());
                                }
                            }
                        }
                        Err(e) => return fail(EXIT_VALIDATION, e.to_string()),
                    }
                    println!(
                        "converged={} iterations={} -> {}",
                        outcome.trace.converged,
                        outcome.trace.iterations.len(),
                        refined_path.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    // Preserve the partial trace for inspection.
                    let _ = std::fs::write(out.join("trace.json"), e.trace.to_json());
                    fail(EXIT_REFINEMENT, e.to_string())
                }
            }
        }
        Command::Render {
            config,
            catalog,
            out,
            svg,
        } => {
            let catalog = match load_catalog(&catalog) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_VALIDATION, e),
            };
            let scene = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_VALIDATION, e.to_string()),
            };
            if let Err(e) = std::fs::create_dir_all(&out) {
                return fail(EXIT_VALIDATION, e.to_string());
            }
            match render_views(&scene, &catalog) {
                Ok(views) => {
                    for view in &views {
                        let path = out.join(format!("{}.ppm", view.viewpoint.label()));
                        if let Err(e) = std::fs::write(&path, write_ppm(view)) {
                            return fail(EXIT_VALIDATION, e.to_string());
                        }
                        println!("{} digest {}", path.display(), view.digest());
                    }
                    if svg {
                        for viewpoint in Viewpoint::ALL {
                            match write_svg(&scene, &catalog, viewpoint) {
                                Ok(text) => {
                                    let path = out.join(format!("{}.svg", viewpoint.label()));
                                    if let Err(e) = std::fs::write(&path, text) {
                                        return fail(EXIT_VALIDATION, e.to_string());
                                    }
                                }
                                Err(e) => return fail(EXIT_VALIDATION, e.to_string()),
                            }
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_VALIDATION, e.to_string()),
            }
        }
        Command::Run {
            task,
            mode,
            profile,
            seed,
            workers,
            gateway,
            target,
            cap,
            updates,
            out,
        } => runner::cmd_run(runner::RunArgs {
            task,
            mode,
            profile,
            seed,
            workers,
            backend: gateway.backend,
            target,
            cap,
            updates,
            out,
        }),
        Command::Report {
            runs,
            task_name,
            target,
            out,
        } => runner::cmd_report(&runs, &task_name, target, &out),
        Command::Diversity {
            texts,
            embedder,
            abs,
            gateway,
        } => {
            let raw = match std::fs::read_to_string(&texts) {
                Ok(t) => t,
                Err(e) => return fail(EXIT_VALIDATION, format!("{}: {e}", texts.display())),
            };
            let lines: Vec<String> = raw
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            let vectors = match embedder {
                EmbedderArg::Builtin => match metrics::embed_builtin(&lines) {
                    Ok(v) => v,
                    Err(e) => return fail(EXIT_VALIDATION, e.to_string()),
                },
                EmbedderArg::External => {
                    // Requires a live encoder behind the HTTP backend or
                    // recorded fixture vectors; neither ships enabled.
                    let catalog = Catalog::builtin();
                    let _ = gateway.build(&catalog);
                    return fail(
                        EXIT_BACKEND,
                        metrics::MetricsError::ExternalUnavailable(
                            "no live encoder configured".into(),
                        )
                        .to_string(),
                    );
                }
            };
            let value = if abs {
                let mut total = 0.0;
                let mut pairs = 0.0;
                for i in 0..vectors.len() {
                    for j in (i + 1)..vectors.len() {
                        total += metrics::cosine(&vectors[i].values, &vectors[j].values).abs();
                        pairs += 1.0;
                    }
                }
                total / pairs
            } else {
                match metrics::diversity(&vectors) {
                    Ok(v) => v,
                    Err(e) => return fail(EXIT_VALIDATION, e.to_string()),
                }
            };
            println!("{}", metrics::format_diversity(value));
            ExitCode::SUCCESS
        }
    }
}
