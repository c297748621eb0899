//! Success-trajectory collection: lockstep rounds over the full stage
//! sequence, counting every control step in every env.

use dexgen_core::catalog::Catalog;
use dexgen_core::rng::derive_seed;
use dexgen_core::scenegen::{ControlJoint, Method, SceneConfig};
use dexgen_sim::mask::{dof_mask, DofMask};
use dexgen_sim::model::ARM_DOF;
use dexgen_sim::world::{grasp_update, reset, step_control, GraspRule, ResetOptions, WorldState};

use crate::chain::{chain_stages, ChainMode, ChainOptions, ChainOutcome, StageArtifact};
use crate::linalg::Mat;
use crate::ppo::PpoConfig;
use crate::spec::{compute_reward, evaluate, resolve_spec, ResolvedSpec};
use crate::trainer::{ObsLayout, ARM_ACTION_DELTA, HAND_ACTION_DELTA};
use crate::LearnError;

/// Per-episode record of one end-to-end rollout.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Trajectory {
    /// Index of the last stage reached.
    pub stage_index: u32,
    pub steps: u32,
    pub obs_dim: u32,
    pub act_dim: u32,
    /// Step-major, padded to obs_dim.
    pub observations: Vec<f32>,
    /// Step-major, padded to act_dim.
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub success: bool,
    /// Control steps this episode consumed, including planner execution.
    pub env_steps: u64,
    pub seed: u64,
    pub env_index: u32,
    pub round: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct CollectOptions {
    pub target_count: u64,
    /// Hard cap on total env steps (summed over envs) for collection.
    pub hard_cap_steps: u64,
    pub seed: u64,
    pub pos_jitter: f64,
    pub yaw_jitter: f64,
    pub workers: usize,
}

#[derive(Debug)]
pub struct CollectOutcome {
    pub trajectories: Vec<Trajectory>,
    /// Every control step in every env, including failed episodes and
    /// planner execution (and, via the fallback path, retraining).
    pub total_env_steps: u64,
    pub capped: bool,
    pub attempts: u64,
    pub successes: u64,
    pub fallback_used: bool,
}

impl CollectOutcome {
    pub fn success_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.successes as f64 / self.attempts as f64
        }
    }
}

struct StagePlan<'a> {
    method: Method,
    mask: DofMask,
    layout: ObsLayout,
    resolved: ResolvedSpec,
    scale: Vec<f64>,
    artifact: &'a StageArtifact,
}

fn action_scale(mask: &DofMask) -> Vec<f64> {
    mask.active_indices()
        .iter()
        .map(|j| {
            if *j < ARM_DOF {
                ARM_ACTION_DELTA
            } else {
                HAND_ACTION_DELTA
            }
        })
        .collect()
}

/// Roll out the chained stages until `target_count` end-to-end successes are
/// recorded or the step cap is hit.
pub fn collect_successes(
    config: &SceneConfig,
    catalog: &Catalog,
    chain: &ChainOutcome,
    ppo: &PpoConfig,
    opts: &CollectOptions,
) -> Result<CollectOutcome, LearnError> {
    if chain.runs.is_empty() {
        return Err(LearnError::SpecInvalid("chain has no stage runs".into()));
    }
    let num_envs = ppo.num_envs;
    let mut world = reset(
        config,
        catalog,
        &ResetOptions {
            num_envs,
            seed: derive_seed(opts.seed, &[0x636f6c]),
            pos_jitter: opts.pos_jitter,
            yaw_jitter: opts.yaw_jitter,
            episode_limit: chain.episode_limit,
            allow_unclean: false,
        },
    )
    .map_err(|e| LearnError::Sim(e.to_string()))?;
    world.workers = opts.workers.max(1);

    // Precompute per-stage execution tables.
    let mut stage_plans: Vec<StagePlan> = Vec::new();
    for run in &chain.runs {
        let mask = match (&run.artifact, run.stage.control_joint) {
            (StageArtifact::Plan { .. }, _) => dof_mask(ControlJoint::Arm),
            (StageArtifact::Policy(result), _) => dof_mask(result.bundle.mode),
        };
        let resolved = resolve_spec(&run.spec, &world)?;
        let layout = ObsLayout::new(&mask, &resolved);
        stage_plans.push(StagePlan {
            method: run.stage.method,
            mask,
            layout,
            resolved,
            scale: action_scale(&mask),
            artifact: &run.artifact,
        });
    }
    let obs_dim_max = stage_plans.iter().map(|s| s.layout.dim).max().unwrap();
    let act_dim_max = stage_plans
        .iter()
        .map(|s| s.scale.len())
        .max()
        .unwrap();

    let rule = GraspRule::default();
    let mut trajectories = Vec::new();
    let mut total_env_steps: u64 = 0;
    let mut attempts: u64 = 0;
    let mut successes: u64 = 0;
    let mut round: u32 = 0;
    let mut capped = false;

    'rounds: loop {
        if successes >= opts.target_count {
            break;
        }
        if total_env_steps >= opts.hard_cap_steps {
            capped = true;
            break;
        }
        // Fresh episodes everywhere.
        for i in 0..num_envs {
            world.reset_env(i, opts.pos_jitter, opts.yaw_jitter);
        }
        let mut alive = vec![true; num_envs];
        let mut stage_of = vec![0usize; num_envs];
        let mut recorders: Vec<TrajRecorder> = (0..num_envs)
            .map(|i| TrajRecorder::new(obs_dim_max, act_dim_max, opts.seed, i as u32, round))
            .collect();

        for (stage_index, plan) in stage_plans.iter().enumerate() {
            let episode_budget = chain.episode_limit;
            match (plan.method, plan.artifact) {
                (Method::MotionPlanning, StageArtifact::Plan { plan: motion, .. }) => {
                    // Waypoint tracking, recorded per env.
                    let mut cursor = 0usize;
                    for _step in 0..episode_budget {
                        if total_env_steps >= opts.hard_cap_steps {
                            capped = true;
                            break;
                        }
                        let q = world.envs[0].robot.arm_qpos;
                        while cursor + 1 < motion.waypoints.len() {
                            let wp = &motion.waypoints[cursor];
                            let err = (0..ARM_DOF)
                                .map(|i| (q[i] - wp[i]).abs())
                                .fold(0.0, f64::max);
                            if err < 0.05 {
                                cursor += 1;
                            } else {
                                break;
                            }
                        }
                        let target = motion.waypoints[cursor];
                        let mut raw = vec![0.0; ARM_DOF];
                        for i in 0..ARM_DOF {
                            raw[i] = (0.9 * (target[i] - q[i]) / ARM_ACTION_DELTA).clamp(-1.0, 1.0);
                        }
                        let scaled: Vec<f64> = raw.iter().map(|r| r * ARM_ACTION_DELTA).collect();
                        let batch: Vec<f64> = (0..num_envs)
                            .flat_map(|_| scaled.iter().copied())
                            .collect();
                        // Record before stepping.
                        for i in 0..num_envs {
                            if alive[i] && stage_of[i] == stage_index {
                                recorders[i].push(&world, i, &plan.layout, &raw, 0.0);
                            }
                        }
                        step_control(&mut world, &batch, &plan.mask)
                            .map_err(|e| LearnError::Sim(e.to_string()))?;
                        grasp_update(&mut world, &rule);
                        total_env_steps += num_envs as u64;

                        let goal = motion.waypoints.last().unwrap();
                        let q = world.envs[0].robot.arm_qpos;
                        let err = (0..ARM_DOF)
                            .map(|i| (q[i] - goal[i]).abs())
                            .fold(0.0, f64::max);
                        if cursor + 1 == motion.waypoints.len() && err <= 0.01 {
                            break;
                        }
                    }
                    // Stage evaluation per env.
                    let outcome = evaluate(&world, &plan.resolved);
                    for i in 0..num_envs {
                        if alive[i] && stage_of[i] == stage_index {
                            if outcome.success[i] {
                                stage_of[i] = stage_index + 1;
                            } else {
                                alive[i] = false;
                            }
                        }
                    }
                }
                (_, StageArtifact::Policy(result)) => {
                    let bundle = &result.bundle;
                    let act_dim = plan.scale.len();
                    let mut done_stage = vec![false; num_envs];
                    for i in 0..num_envs {
                        if !alive[i] || stage_of[i] != stage_index {
                            done_stage[i] = true;
                        }
                    }
                    for step in 0..episode_budget as usize {
                        if total_env_steps >= opts.hard_cap_steps {
                            capped = true;
                            break;
                        }
                        if done_stage.iter().all(|d| *d) {
                            break;
                        }
                        // Observations and deterministic actions.
                        let mut obs = Mat::zeros(num_envs, plan.layout.dim);
                        for i in 0..num_envs {
                            let row =
                                &mut obs.d[i * plan.layout.dim..(i + 1) * plan.layout.dim];
                            plan.layout.observe(&world, i, row);
                        }
                        let (mean, _) = bundle.policy.mlp.forward(&obs);
                        let mut scaled = vec![0.0; num_envs * act_dim];
                        let mut raw_rows: Vec<Vec<f64>> = vec![Vec::new(); num_envs];
                        for i in 0..num_envs {
                            let mut raw = vec![0.0; act_dim];
                            // Stochastic rollout; noise streams stay aligned
                            // across done and live envs.
                            for k in 0..act_dim {
                                let noise = world.envs[i].rng.normal();
                                if !done_stage[i] {
                                    let a = mean.at(i, k)
                                        + bundle.policy.log_std[k].exp() * noise;
                                    raw[k] = a.clamp(-1.0, 1.0);
                                    scaled[i * act_dim + k] = raw[k] * plan.scale[k];
                                }
                            }
                            raw_rows[i] = raw;
                        }
                        step_control(&mut world, &scaled, &plan.mask)
                            .map_err(|e| LearnError::Sim(e.to_string()))?;
                        grasp_update(&mut world, &rule);
                        total_env_steps += num_envs as u64;

                        let rewards =
                            compute_reward(&world, &scaled, act_dim, &plan.resolved)?;
                        let outcome = evaluate(&world, &plan.resolved);
                        for i in 0..num_envs {
                            if done_stage[i] {
                                continue;
                            }
                            recorders[i].push(&world, i, &plan.layout, &raw_rows[i], rewards[i]);
                            if outcome.success[i] {
                                stage_of[i] = stage_index + 1;
                                done_stage[i] = true;
                            } else if outcome.fail[i] {
                                alive[i] = false;
                                done_stage[i] = true;
                            } else if step + 1 == episode_budget as usize {
                                alive[i] = false;
                                done_stage[i] = true;
                            }
                        }
                    }
                    // Anything still unfinished timed out.
                    for i in 0..num_envs {
                        if alive[i] && stage_of[i] == stage_index {
                            alive[i] = false;
                        }
                    }
                }
                (method, _) => {
                    return Err(LearnError::SpecInvalid(format!(
                        "stage {stage_index}: artifact does not match method {method:?}"
                    )));
                }
            }
            if capped {
                break;
            }
        }

        // Harvest end-to-end successes.
        let final_stage = stage_plans.len();
        for i in 0..num_envs {
            attempts += 1;
            if alive[i] && stage_of[i] == final_stage {
                successes += 1;
                if (successes as u64) <= opts.target_count {
                    trajectories.push(recorders[i].finish(final_stage as u32 - 1, true));
                }
            }
        }
        round += 1;
        if capped {
            break 'rounds;
        }
    }

    if successes == 0 && capped {
        return Err(LearnError::CollectionExhausted {
            attempts,
            total_env_steps,
        });
    }
    Ok(CollectOutcome {
        trajectories,
        total_env_steps,
        capped,
        attempts,
        successes,
        fallback_used: false,
    })
}

/// Chain, collect, and on a capped shortfall fall back to completing the
/// full training budget before one final collection pass. All steps count.
pub fn collect_with_fallback(
    config: &SceneConfig,
    catalog: &Catalog,
    stages: &[dexgen_core::scenegen::StageSpec],
    specs: &[crate::spec::StageLearnSpec],
    ppo: &PpoConfig,
    mode: ChainMode,
    chain_opts: &ChainOptions,
    collect_opts: &CollectOptions,
) -> Result<(ChainOutcome, CollectOutcome), LearnError> {
    let chain = chain_stages(config, catalog, stages, specs, ppo, mode, chain_opts)?;
    let mut training_steps = chain.total_env_steps;

    let attempt = if chain.aborted.is_some() {
        Err(LearnError::CollectionExhausted {
            attempts: 0,
            total_env_steps: 0,
        })
    } else {
        collect_successes(config, catalog, &chain, ppo, collect_opts)
    };

    match attempt {
        Ok(mut outcome) if !outcome.capped => {
            outcome.total_env_steps += training_steps;
            Ok((chain, outcome))
        }
        other => {
            // Shortfall: complete the full training (no early stop), then
            // one more collection pass.
            let collected_steps = match &other {
                Ok(o) => o.total_env_steps,
                Err(LearnError::CollectionExhausted {
                    total_env_steps, ..
                }) => *total_env_steps,
                Err(_) => 0,
            };
            training_steps += collected_steps;
            let full_opts = ChainOptions {
                target_success: f64::INFINITY,
                ..*chain_opts
            };
            let chain2 = chain_stages(config, catalog, stages, specs, ppo, mode, &full_opts)?;
            training_steps += chain2.total_env_steps;
            if chain2.aborted.is_some() {
                return Err(LearnError::CollectionExhausted {
                    attempts: 0,
                    total_env_steps: training_steps,
                });
            }
            let mut outcome = collect_successes(config, catalog, &chain2, ppo, collect_opts)
                .map_err(|e| match e {
                    LearnError::CollectionExhausted {
                        attempts,
                        total_env_steps,
                    } => LearnError::CollectionExhausted {
                        attempts,
                        total_env_steps: total_env_steps + training_steps,
                    },
                    other => other,
                })?;
            outcome.total_env_steps += training_steps;
            outcome.fallback_used = true;
            Ok((chain2, outcome))
        }
    }
}

/// Per-env trajectory builder with dimension padding.
struct TrajRecorder {
    obs_dim: usize,
    act_dim: usize,
    observations: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    steps: u32,
    seed: u64,
    env_index: u32,
    round: u32,
}

impl TrajRecorder {
    fn new(obs_dim: usize, act_dim: usize, seed: u64, env_index: u32, round: u32) -> Self {
        TrajRecorder {
            obs_dim,
            act_dim,
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            steps: 0,
            seed,
            env_index,
            round,
        }
    }

    fn push(
        &mut self,
        world: &WorldState,
        env: usize,
        layout: &ObsLayout,
        raw_action: &[f64],
        reward: f64,
    ) {
        let mut row = vec![0.0_f64; layout.dim];
        layout.observe(world, env, &mut row);
        for k in 0..self.obs_dim {
            self.observations
                .push(row.get(k).copied().unwrap_or(0.0) as f32);
        }
        for k in 0..self.act_dim {
            self.actions
                .push(raw_action.get(k).copied().unwrap_or(0.0) as f32);
        }
        self.rewards.push(reward as f32);
        self.steps += 1;
    }

    fn finish(&mut self, stage_index: u32, success: bool) -> Trajectory {
        Trajectory {
            stage_index,
            steps: self.steps,
            obs_dim: self.obs_dim as u32,
            act_dim: self.act_dim as u32,
            observations: std::mem::take(&mut self.observations),
            actions: std::mem::take(&mut self.actions),
            rewards: std::mem::take(&mut self.rewards),
            success,
            env_steps: self.steps as u64,
            seed: self.seed,
            env_index: self.env_index,
            round: self.round,
        }
    }
}
