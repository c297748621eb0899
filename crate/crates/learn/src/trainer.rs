//! Per-stage PPO training over the vectorized world.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use dexgen_core::catalog::Catalog;
use dexgen_core::math::Vec3;
use dexgen_core::rng::{derive_seed, CounterRng};
use dexgen_core::scenegen::{ControlJoint, Method, SceneConfig, StageSpec};
use dexgen_sim::mask::{dof_mask, DofMask};
use dexgen_sim::model::ARM_DOF;
use dexgen_sim::world::{
    grasp_update, reset, step_control, EnvSnapshot, GraspRule, ResetOptions, WorldState,
};

use crate::gae::gae;
use crate::linalg::Mat;
use crate::net::{gaussian_log_prob, Adam, Mlp};
use crate::ppo::{ppo_update, Batch, PolicyNet, PpoConfig, UpdateStats};
use crate::spec::{compute_reward, evaluate, resolve_spec, ResolvedSpec, StageLearnSpec};
use crate::LearnError;

/// Per-control-step action magnitude, radians: policy outputs in [-1, 1]
/// scale to these deltas.
pub const ARM_ACTION_DELTA: f64 = 0.1;
pub const HAND_ACTION_DELTA: f64 = 0.2;

/// Rolling window width for the success-rate estimate.
const SUCCESS_WINDOW: usize = 200;

#[derive(Debug, Clone, Copy)]
pub struct TrainLimits {
    pub episode_limit: u32,
    pub max_updates: usize,
    pub step_budget: Option<u64>,
    pub target_success: Option<f64>,
    pub pos_jitter: f64,
    pub yaw_jitter: f64,
    /// Env-stepping worker threads; results are identical for any count.
    pub workers: usize,
}

impl Default for TrainLimits {
    fn default() -> Self {
        TrainLimits {
            episode_limit: 200,
            max_updates: 200,
            step_budget: None,
            target_success: None,
            pos_jitter: 0.02,
            yaw_jitter: 0.1,
            workers: 1,
        }
    }
}

/// One line of the newline-delimited training log.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StatsRecord {
    pub epoch: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub success_rate: f64,
    pub env_steps: u64,
}

pub fn stats_to_ndjson(records: &[StatsRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("stats serialize"));
        out.push('\n');
    }
    out
}

/// Observation layout: active joint positions and velocities, palm pose,
/// fingertip positions, then spec-referenced object poses, articulation
/// features, and literal target points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObsLayout {
    pub active_joints: Vec<usize>,
    pub bodies: Vec<usize>,
    pub articulations: Vec<usize>,
    pub points: Vec<[f64; 3]>,
    pub dim: usize,
}

impl ObsLayout {
    pub fn new(mask: &DofMask, spec: &ResolvedSpec) -> ObsLayout {
        let active_joints = mask.active_indices();
        let dim = active_joints.len() * 2
            + 7
            + 15
            + spec.observed_bodies.len() * 7
            + spec.observed_articulations.len() * 4
            + spec.observed_points.len() * 3;
        ObsLayout {
            active_joints,
            bodies: spec.observed_bodies.clone(),
            articulations: spec.observed_articulations.clone(),
            points: spec.observed_points.iter().map(|p| p.0).collect(),
            dim,
        }
    }

    pub fn observe(&self, world: &WorldState, env: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let state = &world.envs[env];
        let mut cursor = 0;
        for j in &self.active_joints {
            out[cursor] = if *j < ARM_DOF {
                state.robot.arm_qpos[*j]
            } else {
                state.robot.hand_qpos[*j - ARM_DOF]
            };
            cursor += 1;
        }
        for j in &self.active_joints {
            out[cursor] = if *j < ARM_DOF {
                state.robot.arm_qvel[*j]
            } else {
                state.robot.hand_qvel[*j - ARM_DOF]
            };
            cursor += 1;
        }
        for k in 0..3 {
            out[cursor + k] = state.robot.palm.p[k];
        }
        for k in 0..4 {
            out[cursor + 3 + k] = state.robot.palm.q.0[k];
        }
        cursor += 7;
        for tip in &state.robot.tips {
            for k in 0..3 {
                out[cursor + k] = tip.p[k];
            }
            cursor += 3;
        }
        for b in &self.bodies {
            let pose = &state.bodies[*b].pose;
            for k in 0..3 {
                out[cursor + k] = pose.p[k];
            }
            for k in 0..4 {
                out[cursor + 3 + k] = pose.q.0[k];
            }
            cursor += 7;
        }
        for a in &self.articulations {
            let art = &state.articulations[*a];
            let handle = art.handle_world();
            for k in 0..3 {
                out[cursor + k] = handle[k];
            }
            out[cursor + 3] = art.qpos;
            cursor += 4;
        }
        for p in &self.points {
            out[cursor..cursor + 3].copy_from_slice(p);
            cursor += 3;
        }
        debug_assert_eq!(cursor, self.dim);
    }
}

/// Outcome flags for one control step of the batched stage environment.
pub struct StepFlags {
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub successes: Vec<bool>,
    /// Terminal states of envs that just succeeded, captured before the
    /// auto-reset (populated only when snapshot capture is enabled).
    pub success_snapshots: Vec<(usize, EnvSnapshot)>,
}

/// Vectorized single-stage environment: masked stepping, reward/eval, and
/// auto-reset from scene jitter or a pooled initial-state set.
pub struct StageEnv {
    pub world: WorldState,
    pub mask: DofMask,
    pub layout: ObsLayout,
    pub resolved: ResolvedSpec,
    pub episode_limit: u32,
    pub pos_jitter: f64,
    pub yaw_jitter: f64,
    pub pool: Option<Vec<EnvSnapshot>>,
    rule: GraspRule,
    action_scale: Vec<f64>,
    pub capture_success_snapshots: bool,
    pub episodes: u64,
    pub successes: u64,
    recent: VecDeque<bool>,
}

impl StageEnv {
    pub fn new(
        config: &SceneConfig,
        catalog: &Catalog,
        mode: ControlJoint,
        spec: &StageLearnSpec,
        num_envs: usize,
        seed: u64,
        limits: &TrainLimits,
        pool: Option<Vec<EnvSnapshot>>,
    ) -> Result<StageEnv, LearnError> {
        let mask = dof_mask(mode);
        let opts = ResetOptions {
            num_envs,
            seed,
            pos_jitter: limits.pos_jitter,
            yaw_jitter: limits.yaw_jitter,
            episode_limit: limits.episode_limit,
            allow_unclean: false,
        };
        let mut world = reset(config, catalog, &opts).map_err(|e| LearnError::Sim(e.to_string()))?;
        world.workers = limits.workers.max(1);
        let resolved = resolve_spec(spec, &world)?;
        let layout = ObsLayout::new(&mask, &resolved);
        let action_scale: Vec<f64> = mask
            .active_indices()
            .iter()
            .map(|j| {
                if *j < ARM_DOF {
                    ARM_ACTION_DELTA
                } else {
                    HAND_ACTION_DELTA
                }
            })
            .collect();
        let mut env = StageEnv {
            world,
            mask,
            layout,
            resolved,
            episode_limit: limits.episode_limit,
            pos_jitter: limits.pos_jitter,
            yaw_jitter: limits.yaw_jitter,
            pool,
            rule: GraspRule::default(),
            action_scale,
            capture_success_snapshots: false,
            episodes: 0,
            successes: 0,
            recent: VecDeque::new(),
        };
        // Pool-based stages start every env from a pooled state.
        if env.pool.is_some() {
            for i in 0..env.world.num_envs() {
                env.reset_single(i);
            }
        }
        Ok(env)
    }

    pub fn act_dim(&self) -> usize {
        self.action_scale.len()
    }

    pub fn obs_matrix(&self) -> Mat {
        let n = self.world.num_envs();
        let mut obs = Mat::zeros(n, self.layout.dim);
        for i in 0..n {
            let row = &mut obs.d[i * self.layout.dim..(i + 1) * self.layout.dim];
            self.layout.observe(&self.world, i, row);
        }
        obs
    }

    fn reset_single(&mut self, env_index: usize) {
        if let Some(pool) = &self.pool {
            let pick = self.world.envs[env_index].rng.index(pool.len());
            let snapshot = pool[pick].clone();
            self.world.restore_env(env_index, &snapshot);
        } else {
            self.world
                .reset_env(env_index, self.pos_jitter, self.yaw_jitter);
        }
    }

    /// Scale raw policy outputs into joint deltas.
    pub fn scale_actions(&self, raw: &Mat) -> Vec<f64> {
        let n = self.world.num_envs();
        let act = self.act_dim();
        let mut out = vec![0.0; n * act];
        for i in 0..n {
            for k in 0..act {
                out[i * act + k] = raw.at(i, k).clamp(-1.0, 1.0) * self.action_scale[k];
            }
        }
        out
    }

    /// One control step for the whole batch: step, grasp, reward, evaluate,
    /// timeout handling, and auto-reset of finished envs.
    pub fn step(&mut self, raw_actions: &Mat) -> Result<StepFlags, LearnError> {
        let n = self.world.num_envs();
        let act = self.act_dim();
        let scaled = self.scale_actions(raw_actions);
        step_control(&mut self.world, &scaled, &self.mask)
            .map_err(|e| LearnError::Sim(e.to_string()))?;
        grasp_update(&mut self.world, &self.rule);

        let rewards = compute_reward(&self.world, &scaled, act, &self.resolved)?;
        let outcome = evaluate(&self.world, &self.resolved);

        let mut dones = vec![false; n];
        let mut successes = vec![false; n];
        let mut success_snapshots = Vec::new();
        for i in 0..n {
            let timeout = self.world.envs[i].episode_step >= self.episode_limit;
            let done = outcome.success[i] || outcome.fail[i] || timeout;
            if done {
                dones[i] = true;
                successes[i] = outcome.success[i];
                self.episodes += 1;
                if outcome.success[i] {
                    self.successes += 1;
                    if self.capture_success_snapshots {
                        success_snapshots.push((i, self.world.envs[i].snapshot()));
                    }
                }
                self.recent.push_back(outcome.success[i]);
                if self.recent.len() > SUCCESS_WINDOW {
                    self.recent.pop_front();
                }
                self.reset_single(i);
            }
        }
        Ok(StepFlags {
            rewards,
            dones,
            successes,
            success_snapshots,
        })
    }

    pub fn rolling_success_rate(&self) -> f64 {
        if self.recent.is_empty() {
            return 0.0;
        }
        self.recent.iter().filter(|s| **s).count() as f64 / self.recent.len() as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub policy: PolicyNet,
    pub value: Mlp,
    pub mode: ControlJoint,
    pub obs_dim: usize,
    pub act_dim: usize,
}

#[derive(Debug)]
pub struct TrainResult {
    pub bundle: PolicyBundle,
    pub stats: Vec<StatsRecord>,
    pub env_steps: u64,
    pub final_success_rate: f64,
    pub budget_exhausted: bool,
}

/// Train one RL stage until the update budget, step budget, or target
/// success rate is reached. Deterministic in `seed`.
pub fn train_stage(
    config: &SceneConfig,
    catalog: &Catalog,
    stage: &StageSpec,
    spec: &StageLearnSpec,
    ppo: &PpoConfig,
    limits: &TrainLimits,
    pool: Option<Vec<EnvSnapshot>>,
    seed: u64,
) -> Result<TrainResult, LearnError> {
    if stage.method != Method::Rl {
        return Err(LearnError::WrongMethod(stage.instruction.clone()));
    }
    ppo.validate()?;
    let mode = stage
        .control_joint
        .ok_or_else(|| LearnError::SpecInvalid("RL stage missing control_joint".into()))?;

    let mut env = StageEnv::new(
        config,
        catalog,
        mode,
        spec,
        ppo.num_envs,
        derive_seed(seed, &[0x656e76]),
        limits,
        pool,
    )?;
    let obs_dim = env.layout.dim;
    let act_dim = env.act_dim();

    let mut init_rng = CounterRng::new(derive_seed(seed, &[0x6e6574]), 0);
    let mut policy = PolicyNet::new(obs_dim, act_dim, &ppo.hidden_layers, &mut init_rng);
    let mut value_sizes = vec![obs_dim];
    value_sizes.extend_from_slice(&ppo.hidden_layers);
    value_sizes.push(1);
    let mut value = Mlp::new(&value_sizes, &mut init_rng);
    let mut popt = Adam::for_mlp_with_extra(ppo.learning_rate, &policy.mlp, act_dim);
    let mut vopt = Adam::for_mlp(ppo.learning_rate, &value);

    let n = ppo.num_envs;
    let horizon = ppo.horizon;
    let mut stats = Vec::new();
    let mut env_steps: u64 = 0;
    let mut budget_exhausted = true;

    for update in 0..limits.max_updates {
        let mut obs_steps: Vec<Mat> = Vec::with_capacity(horizon);
        let mut act_steps: Vec<Mat> = Vec::with_capacity(horizon);
        let mut lp_steps: Vec<Vec<f64>> = Vec::with_capacity(horizon);
        let mut val_steps: Vec<Vec<f64>> = Vec::with_capacity(horizon + 1);
        let mut rew_steps: Vec<Vec<f64>> = Vec::with_capacity(horizon);
        let mut done_steps: Vec<Vec<bool>> = Vec::with_capacity(horizon);

        for _t in 0..horizon {
            let obs = env.obs_matrix();
            let (mean, _) = policy.mlp.forward(&obs);
            let (values_t, _) = value.forward(&obs);
            let mut actions = Mat::zeros(n, act_dim);
            for i in 0..n {
                for k in 0..act_dim {
                    let noise = env.world.envs[i].rng.normal();
                    *actions.at_mut(i, k) = mean.at(i, k) + policy.log_std[k].exp() * noise;
                }
            }
            let log_probs = gaussian_log_prob(&actions, &mean, &policy.log_std);
            let flags = env.step(&actions)?;
            env_steps += n as u64;

            obs_steps.push(obs);
            act_steps.push(actions);
            lp_steps.push(log_probs);
            val_steps.push((0..n).map(|i| values_t.at(i, 0)).collect());
            rew_steps.push(flags.rewards);
            done_steps.push(flags.dones);
        }
        // Bootstrap values at the post-rollout states.
        let obs_last = env.obs_matrix();
        let (values_last, _) = value.forward(&obs_last);
        val_steps.push((0..n).map(|i| values_last.at(i, 0)).collect());

        let advantages = gae(&rew_steps, &val_steps, &done_steps, ppo.discount, ppo.gae_lambda)?;

        // Flatten step-major into one batch.
        let total = horizon * n;
        let mut obs = Mat::zeros(total, obs_dim);
        let mut actions = Mat::zeros(total, act_dim);
        let mut log_probs = vec![0.0; total];
        let mut adv = vec![0.0; total];
        let mut returns = vec![0.0; total];
        for t in 0..horizon {
            for i in 0..n {
                let row = t * n + i;
                obs.d[row * obs_dim..(row + 1) * obs_dim]
                    .copy_from_slice(obs_steps[t].row(i));
                actions.d[row * act_dim..(row + 1) * act_dim]
                    .copy_from_slice(act_steps[t].row(i));
                log_probs[row] = lp_steps[t][i];
                adv[row] = advantages[t][i];
                returns[row] = advantages[t][i] + val_steps[t][i];
            }
        }
        let mut batch = Batch {
            obs,
            actions,
            log_probs,
            advantages: adv,
            returns,
        };
        let update_stats: UpdateStats = ppo_update(
            &mut policy,
            &mut value,
            &mut popt,
            &mut vopt,
            &mut batch,
            ppo,
            update as u64,
        )?;

        let success_rate = env.rolling_success_rate();
        stats.push(StatsRecord {
            epoch: update,
            policy_loss: update_stats.policy_loss,
            value_loss: update_stats.value_loss,
            entropy: update_stats.entropy,
            clip_fraction: update_stats.clip_fraction,
            approx_kl: update_stats.approx_kl,
            success_rate,
            env_steps,
        });

        if let Some(target) = limits.target_success {
            if env.recent.len() >= SUCCESS_WINDOW && success_rate >= target {
                budget_exhausted = false;
                break;
            }
        }
        if let Some(budget) = limits.step_budget {
            if env_steps >= budget {
                break;
            }
        }
    }

    let final_success_rate = stats.last().map(|s| s.success_rate).unwrap_or(0.0);
    Ok(TrainResult {
        bundle: PolicyBundle {
            policy,
            value,
            mode,
            obs_dim,
            act_dim,
        },
        stats,
        env_steps,
        final_success_rate,
        budget_exhausted,
    })
}

/// Evaluation rollouts with the trained stochastic policy (noise drawn from
/// the per-env counter streams, so results are a pure function of the seed):
/// returns the success rate, terminal success snapshots, and steps consumed.
pub fn evaluate_policy(
    env: &mut StageEnv,
    bundle: &PolicyBundle,
    rounds: usize,
) -> Result<(f64, Vec<EnvSnapshot>, u64), LearnError> {
    let n = env.world.num_envs();
    let mut pool = Vec::new();
    let mut episodes = 0u64;
    let mut successes = 0u64;
    let mut env_steps = 0u64;

    env.capture_success_snapshots = true;
    for _round in 0..rounds {
        // Fresh episodes for every env.
        for i in 0..n {
            env.reset_single(i);
        }
        let mut finished = vec![false; n];
        for _step in 0..env.episode_limit {
            let obs = env.obs_matrix();
            let (mean, _) = bundle.policy.mlp.forward(&obs);
            let mut actions = Mat::zeros(n, bundle.act_dim);
            for i in 0..n {
                // Draw noise for every env so streams stay aligned whether
                // or not the env already finished.
                for k in 0..bundle.act_dim {
                    let noise = env.world.envs[i].rng.normal();
                    if !finished[i] {
                        *actions.at_mut(i, k) =
                            mean.at(i, k) + bundle.policy.log_std[k].exp() * noise;
                    }
                }
            }
            let flags = env.step(&actions)?;
            env_steps += n as u64;
            for (i, snapshot) in &flags.success_snapshots {
                if !finished[*i] {
                    pool.push(snapshot.clone());
                }
            }
            for i in 0..n {
                if finished[i] {
                    continue;
                }
                if flags.dones[i] {
                    finished[i] = true;
                    episodes += 1;
                    if flags.successes[i] {
                        successes += 1;
                    }
                }
            }
            if finished.iter().all(|f| *f) {
                break;
            }
        }
        // Envs that never terminated count as timeouts.
        for f in &finished {
            if !*f {
                episodes += 1;
            }
        }
    }
    env.capture_success_snapshots = false;
    let rate = if episodes == 0 {
        0.0
    } else {
        successes as f64 / episodes as f64
    };
    Ok((rate, pool, env_steps))
}

/// Convenience: the single fixed reach point used by tests and the reach
/// fixture task.
pub fn reach_point() -> Vec3 {
    Vec3::new(0.15, 0.25, 0.95)
}
