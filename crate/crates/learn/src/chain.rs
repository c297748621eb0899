//! Subtask chaining: run a stage sequence under one of the four execution
//! modes, feeding each stage's success states to the next.

use serde::{Deserialize, Serialize};

use dexgen_core::catalog::Catalog;
use dexgen_core::rng::derive_seed;
use dexgen_core::scenegen::{ControlJoint, Method, SceneConfig, StageSpec};
use dexgen_sim::ik::{solve_ik, IkOutcome, IkParams};
use dexgen_sim::model::ARM_DOF;
use dexgen_sim::planner::{execute_plan, plan_motion, PlanParams, PlanResult};
use dexgen_sim::world::EnvSnapshot;
use dexgen_core::scenegen::Pose;
use dexgen_core::math::Vec3;

use crate::ppo::PpoConfig;
use crate::spec::{evaluate, resolve_spec, Predicate, Ref, StageLearnSpec};
use crate::trainer::{evaluate_policy, train_stage, StageEnv, TrainLimits, TrainResult};
use crate::LearnError;

/// Monolithic episode length; per-subtask episodes use half of it.
pub const MONOLITHIC_EPISODE: u32 = 400;
pub const SUBTASK_EPISODE: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    NoSubgoal,
    Subgoals,
    FreezeDofs,
    MpHybrid,
}

impl ChainMode {
    pub const ALL: [ChainMode; 4] = [
        ChainMode::NoSubgoal,
        ChainMode::Subgoals,
        ChainMode::FreezeDofs,
        ChainMode::MpHybrid,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ChainMode::NoSubgoal => "no_subgoal",
            ChainMode::Subgoals => "subgoals",
            ChainMode::FreezeDofs => "freeze_dofs",
            ChainMode::MpHybrid => "mp_hybrid",
        }
    }

    pub fn parse(text: &str) -> Option<ChainMode> {
        ChainMode::ALL.into_iter().find(|m| m.as_str() == text)
    }
}

impl std::fmt::Display for ChainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChainOptions {
    pub seed: u64,
    /// Per-stage PPO update cap.
    pub updates_per_stage: usize,
    /// Early-stop target for stage training.
    pub target_success: f64,
    /// Minimum deterministic success rate a stage must reach; below this the
    /// chain aborts.
    pub min_stage_success: f64,
    /// Evaluation rounds used to measure each stage and build its pool.
    pub eval_rounds: usize,
    pub pos_jitter: f64,
    pub yaw_jitter: f64,
    /// Overall env-step budget across the chain (training + evaluation).
    pub step_budget: Option<u64>,
    pub workers: usize,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            seed: 0,
            updates_per_stage: 200,
            target_success: 0.95,
            min_stage_success: 0.05,
            eval_rounds: 2,
            pos_jitter: 0.01,
            yaw_jitter: 0.05,
            step_budget: None,
            workers: 1,
        }
    }
}

#[derive(Debug)]
pub enum StageArtifact {
    Policy(Box<TrainResult>),
    Plan {
        plan: PlanResult,
        goal: [f64; ARM_DOF],
    },
}

#[derive(Debug)]
pub struct StageRun {
    pub stage: StageSpec,
    pub spec: StageLearnSpec,
    pub artifact: StageArtifact,
    pub env_steps: u64,
    pub success_rate: f64,
}

#[derive(Debug)]
pub struct ChainOutcome {
    pub mode: ChainMode,
    pub episode_limit: u32,
    pub runs: Vec<StageRun>,
    pub total_env_steps: u64,
    pub aborted: Option<String>,
}

/// Apply the mode's stage transformation: no_subgoal collapses to a single
/// monolithic stage with the final stage's evaluation; subgoals unlock all
/// joints; freeze_dofs keeps the declared masks; mp_hybrid keeps planner
/// stages as planner stages.
pub fn normalize_stages(
    stages: &[StageSpec],
    specs: &[StageLearnSpec],
    mode: ChainMode,
    full_instruction: &str,
) -> Result<(Vec<StageSpec>, Vec<StageLearnSpec>, u32), LearnError> {
    if stages.is_empty() || stages.len() != specs.len() {
        return Err(LearnError::SpecInvalid(
            "stage and spec lists must be nonempty and aligned".into(),
        ));
    }
    let out = match mode {
        ChainMode::NoSubgoal => {
            let last = specs.last().unwrap().clone();
            (
                vec![StageSpec {
                    instruction: full_instruction.to_string(),
                    method: Method::Rl,
                    control_joint: Some(ControlJoint::Both),
                }],
                vec![last],
                MONOLITHIC_EPISODE,
            )
        }
        ChainMode::Subgoals => (
            stages
                .iter()
                .map(|s| StageSpec {
                    instruction: s.instruction.clone(),
                    method: Method::Rl,
                    control_joint: Some(ControlJoint::Both),
                })
                .collect(),
            specs.to_vec(),
            SUBTASK_EPISODE,
        ),
        ChainMode::FreezeDofs => (
            stages
                .iter()
                .map(|s| StageSpec {
                    instruction: s.instruction.clone(),
                    method: Method::Rl,
                    // Planner stages become arm-mask RL stages here.
                    control_joint: Some(s.control_joint.unwrap_or(ControlJoint::Arm)),
                })
                .collect(),
            specs.to_vec(),
            SUBTASK_EPISODE,
        ),
        ChainMode::MpHybrid => (stages.to_vec(), specs.to_vec(), SUBTASK_EPISODE),
    };
    Ok(out)
}

/// Palm target for a planner stage: the first success predicate of the form
/// distance_below(palm, target).
fn planner_target(spec: &StageLearnSpec) -> Result<Vec3, LearnError> {
    for p in &spec.eval.success {
        if let Predicate::DistanceBelow {
            subject: Ref::Palm,
            target,
            ..
        } = p
        {
            return match target {
                Ref::Point { p } => Ok(Vec3::new(p[0], p[1], p[2])),
                Ref::PoseLit { p, .. } => Ok(Vec3::new(p[0], p[1], p[2])),
                other => Err(LearnError::SpecInvalid(format!(
                    "planner stage target must be a literal point, got {other:?}"
                ))),
            };
        }
    }
    Err(LearnError::SpecInvalid(
        "planner stage needs a distance_below(palm, point) success predicate".into(),
    ))
}

/// Execute the full chain. Stage k+1 trains and evaluates from stage k's
/// success terminal states.
pub fn chain_stages(
    config: &SceneConfig,
    catalog: &Catalog,
    stages: &[StageSpec],
    specs: &[StageLearnSpec],
    ppo: &PpoConfig,
    mode: ChainMode,
    opts: &ChainOptions,
) -> Result<ChainOutcome, LearnError> {
    let (stages, specs, episode_limit) =
        normalize_stages(stages, specs, mode, &config.instruction)?;

    let mut runs: Vec<StageRun> = Vec::new();
    let mut pool: Option<Vec<EnvSnapshot>> = None;
    let mut total_env_steps: u64 = 0;
    let mut aborted = None;

    for (k, (stage, spec)) in stages.iter().zip(specs.iter()).enumerate() {
        let stage_seed = derive_seed(opts.seed, &[k as u64, 0x737461]);
        let limits = TrainLimits {
            episode_limit,
            max_updates: opts.updates_per_stage,
            step_budget: opts
                .step_budget
                .map(|b| b.saturating_sub(total_env_steps)),
            target_success: Some(opts.target_success),
            pos_jitter: opts.pos_jitter,
            yaw_jitter: opts.yaw_jitter,
            workers: opts.workers,
        };

        match stage.method {
            Method::MotionPlanning => {
                // Planner transport stage: IK to the declared palm target,
                // plan on env 0, execute across the batch. No RL updates.
                let mut env = StageEnv::new(
                    config,
                    catalog,
                    ControlJoint::Arm,
                    spec,
                    ppo.num_envs,
                    derive_seed(stage_seed, &[0x6d70]),
                    &limits,
                    pool.clone(),
                )?;
                let target_p = planner_target(spec)?;
                // Face the target: yaw the palm toward it so the wrist chain
                // approaches along the pan direction.
                let base_p = env.world.base_pose.p;
                let yaw = (target_p.y() - base_p.y()).atan2(target_p.x() - base_p.x());
                let target = Pose::new(target_p, dexgen_core::math::Quat::from_yaw(yaw));
                let q0 = env.world.envs[0].robot.arm_qpos;
                let model = env.world.model.clone();
                let base = env.world.base_pose;
                let goal = match solve_ik(&model, &base, &target, &q0, &IkParams::default()) {
                    IkOutcome::Converged { qpos, .. } => qpos,
                    IkOutcome::Failed { pos_residual, .. } => {
                        aborted = Some(format!(
                            "stage {k}: IK to planner target failed (residual {pos_residual:.3})"
                        ));
                        break;
                    }
                };
                let params = PlanParams {
                    seed: derive_seed(stage_seed, &[0x706c616e]),
                    ..PlanParams::default()
                };
                let plan = match plan_motion(&env.world, 0, &goal, &params) {
                    Ok(p) => p,
                    Err(e) => {
                        aborted = Some(format!("stage {k}: planning failed: {e}"));
                        break;
                    }
                };
                let exec = execute_plan(&mut env.world, &plan, 0.9, episode_limit, 0)
                    .map_err(|e| LearnError::Sim(e.to_string()))?;
                total_env_steps += exec.steps as u64 * ppo.num_envs as u64;

                // Per-env stage evaluation at the terminal state.
                let resolved = resolve_spec(spec, &env.world)?;
                let outcome = evaluate(&env.world, &resolved);
                let mut new_pool = Vec::new();
                for (i, ok) in outcome.success.iter().enumerate() {
                    if *ok {
                        new_pool.push(env.world.envs[i].snapshot());
                    }
                }
                let success_rate = new_pool.len() as f64 / ppo.num_envs as f64;
                runs.push(StageRun {
                    stage: stage.clone(),
                    spec: spec.clone(),
                    artifact: StageArtifact::Plan { plan, goal },
                    env_steps: exec.steps as u64 * ppo.num_envs as u64,
                    success_rate,
                });
                if new_pool.is_empty() || success_rate < opts.min_stage_success {
                    aborted = Some(format!(
                        "stage {k}: planner stage success rate {success_rate:.2} below minimum"
                    ));
                    break;
                }
                pool = Some(new_pool);
            }
            Method::Rl => {
                let result = train_stage(
                    config,
                    catalog,
                    stage,
                    spec,
                    ppo,
                    &limits,
                    pool.clone(),
                    stage_seed,
                )?;
                total_env_steps += result.env_steps;

                // Deterministic evaluation builds the next pool and the
                // reported per-stage rate.
                let mut eval_env = StageEnv::new(
                    config,
                    catalog,
                    result.bundle.mode,
                    spec,
                    ppo.num_envs,
                    derive_seed(stage_seed, &[0x6576616c]),
                    &limits,
                    pool.clone(),
                )?;
                let (success_rate, new_pool, eval_steps) =
                    evaluate_policy(&mut eval_env, &result.bundle, opts.eval_rounds)?;
                total_env_steps += eval_steps;

                let stage_steps = result.env_steps + eval_steps;
                runs.push(StageRun {
                    stage: stage.clone(),
                    spec: spec.clone(),
                    artifact: StageArtifact::Policy(Box::new(result)),
                    env_steps: stage_steps,
                    success_rate,
                });
                if new_pool.is_empty() || success_rate < opts.min_stage_success {
                    aborted = Some(format!(
                        "stage {k}: success rate {success_rate:.2} below minimum, pool {}",
                        new_pool.len()
                    ));
                    break;
                }
                pool = Some(new_pool);
            }
        }
        if let Some(budget) = opts.step_budget {
            if total_env_steps >= budget {
                if runs.len() < stages.len() {
                    aborted = Some(format!(
                        "step budget {budget} exhausted after stage {k}"
                    ));
                }
                break;
            }
        }
    }

    Ok(ChainOutcome {
        mode,
        episode_limit,
        runs,
        total_env_steps,
        aborted,
    })
}
