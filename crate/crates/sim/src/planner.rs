//! Sampling-based motion planning: RRT-Connect over arm joint space with the
//! hand frozen, shortcut smoothing, plan audit, and waypoint-tracking
//! execution through the control step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use dexgen_core::math::Vec3;
use dexgen_core::rng::CounterRng;
use dexgen_core::scenegen::ControlJoint;

use crate::collision::sphere_box;
use crate::mask::dof_mask;
use crate::model::{collision_sphere_centers, forward_kinematics, ARM_DOF};
use crate::world::{step_control, WorldState};
use crate::SimError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlanParams {
    /// Joint-space step, radians (L2).
    pub step_size: f64,
    pub max_nodes: usize,
    pub goal_bias: f64,
    pub seed: u64,
    /// Edge-validity interpolation resolution, radians; finer than the
    /// independent audit so returned plans survive full-resolution rechecks.
    pub edge_resolution: f64,
}

impl Default for PlanParams {
    fn default() -> Self {
        PlanParams {
            step_size: 0.1,
            max_nodes: 20_000,
            goal_bias: 0.1,
            seed: 0,
            edge_resolution: 0.005,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanResult {
    pub waypoints: Vec<[f64; ARM_DOF]>,
    pub smoothed: bool,
    pub nodes_expanded: usize,
    pub seed: u64,
}

impl PlanResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<PlanResult, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("start configuration is in collision")]
    StartInCollision,
    #[error("goal configuration is in collision")]
    GoalInCollision,
    #[error("planner exhausted {nodes_expanded} nodes without connecting")]
    NodesExhausted { nodes_expanded: usize },
}

fn joint_dist(a: &[f64; ARM_DOF], b: &[f64; ARM_DOF]) -> f64 {
    let mut acc = 0.0;
    for i in 0..ARM_DOF {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc.sqrt()
}

fn lerp(a: &[f64; ARM_DOF], b: &[f64; ARM_DOF], t: f64) -> [f64; ARM_DOF] {
    let mut out = [0.0; ARM_DOF];
    for i in 0..ARM_DOF {
        out[i] = a[i] + (b[i] - a[i]) * t;
    }
    out
}

/// Collision test for an arm configuration in one env: arm link spheres and
/// fingertip spheres against bodies, articulations, and the table slab. The
/// attached body (if any) travels with the hand and is skipped.
pub fn arm_in_collision(world: &WorldState, env_index: usize, qpos: &[f64; ARM_DOF]) -> bool {
    let env = &world.envs[env_index];
    let fk = forward_kinematics(&world.model, &world.base_pose, qpos, &env.robot.hand_qpos);
    let mut spheres: Vec<(Vec3, f64)> = collision_sphere_centers(&world.model, &fk);
    for (i, tip) in fk.tips.iter().enumerate() {
        spheres.push((tip.p, world.model.fingers[i].tip_radius));
    }

    let table = crate::collision::Collider {
        center: Vec3::new(0.0, 0.0, world.table.height - 0.025),
        yaw: 0.0,
        shape: crate::collision::Shape::Box {
            half: Vec3::new(
                world.table.length / 2.0,
                world.table.width / 2.0,
                0.025,
            ),
        },
    };

    for (center, radius) in &spheres {
        if sphere_box(center, *radius, &table).is_some() {
            return true;
        }
        for (bi, body) in env.bodies.iter().enumerate() {
            if Some(bi) == env.robot.attached {
                continue;
            }
            let collider =
                crate::collision::Collider::new(body.pose.p, &body.pose.q, body.shape);
            if sphere_box(center, *radius, &collider).is_some() {
                return true;
            }
        }
        for art in &env.articulations {
            let collider = crate::collision::Collider::new(
                art.base_pose.p,
                &art.base_pose.q,
                crate::collision::Shape::Box { half: art.half },
            );
            if sphere_box(center, *radius, &collider).is_some() {
                return true;
            }
        }
        // Ground plane.
        if center.z() - radius < 0.0 {
            return true;
        }
    }
    false
}

fn segment_clear(
    world: &WorldState,
    env_index: usize,
    a: &[f64; ARM_DOF],
    b: &[f64; ARM_DOF],
    resolution: f64,
) -> bool {
    let dist = joint_dist(a, b);
    let steps = (dist / resolution).ceil().max(1.0) as usize;
    for s in 1..=steps {
        let q = lerp(a, b, s as f64 / steps as f64);
        if arm_in_collision(world, env_index, &q) {
            return false;
        }
    }
    true
}

struct Tree {
    nodes: Vec<[f64; ARM_DOF]>,
    parents: Vec<usize>,
}

impl Tree {
    fn new(root: [f64; ARM_DOF]) -> Tree {
        Tree {
            nodes: vec![root],
            parents: vec![usize::MAX],
        }
    }

    fn nearest(&self, q: &[f64; ARM_DOF]) -> usize {
        let mut best = 0;
        let mut best_d = f64::MAX;
        for (i, node) in self.nodes.iter().enumerate() {
            let d = joint_dist(node, q);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn path_to_root(&self, mut index: usize) -> Vec<[f64; ARM_DOF]> {
        let mut path = Vec::new();
        while index != usize::MAX {
            path.push(self.nodes[index]);
            index = self.parents[index];
        }
        path
    }
}

enum Extend {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

fn extend(
    tree: &mut Tree,
    target: &[f64; ARM_DOF],
    world: &WorldState,
    env_index: usize,
    step: f64,
    resolution: f64,
) -> Extend {
    let near_idx = tree.nearest(target);
    let near = tree.nodes[near_idx];
    let dist = joint_dist(&near, target);
    if dist < 1e-12 {
        return Extend::Reached(near_idx);
    }
    let (q_new, reached) = if dist <= step {
        (*target, true)
    } else {
        (lerp(&near, target, step / dist), false)
    };
    if !segment_clear(world, env_index, &near, &q_new, resolution) {
        return Extend::Trapped;
    }
    tree.nodes.push(q_new);
    tree.parents.push(near_idx);
    let idx = tree.nodes.len() - 1;
    if reached {
        Extend::Reached(idx)
    } else {
        Extend::Advanced(idx)
    }
}

/// Plan a collision-free arm path for one env using RRT-Connect.
pub fn plan_motion(
    world: &WorldState,
    env_index: usize,
    goal_qpos: &[f64; ARM_DOF],
    params: &PlanParams,
) -> Result<PlanResult, PlanError> {
    let start = world.envs[env_index].robot.arm_qpos;
    if arm_in_collision(world, env_index, &start) {
        return Err(PlanError::StartInCollision);
    }
    if arm_in_collision(world, env_index, goal_qpos) {
        return Err(PlanError::GoalInCollision);
    }

    let limits = world.model.arm_limits();
    let mut rng = CounterRng::new(params.seed, 0);

    let mut tree_a = Tree::new(start);
    let mut tree_b = Tree::new(*goal_qpos);
    // Tracks whether tree_a is currently the start tree.
    let mut a_is_start = true;

    let mut raw_path: Option<Vec<[f64; ARM_DOF]>> = None;
    let mut nodes_expanded = 2;

    if joint_dist(&start, goal_qpos) < 1e-12 {
        raw_path = Some(vec![start]);
    }

    while raw_path.is_none() {
        if nodes_expanded >= params.max_nodes {
            return Err(PlanError::NodesExhausted { nodes_expanded });
        }
        let sample: [f64; ARM_DOF] = if rng.uniform() < params.goal_bias {
            tree_b.nodes[0]
        } else {
            let mut q = [0.0; ARM_DOF];
            for i in 0..ARM_DOF {
                q[i] = rng.range(limits[i].0, limits[i].1);
            }
            q
        };

        match extend(&mut tree_a, &sample, world, env_index, params.step_size, params.edge_resolution) {
            Extend::Trapped => {}
            Extend::Advanced(new_idx) | Extend::Reached(new_idx) => {
                nodes_expanded += 1;
                let bridge = tree_a.nodes[new_idx];
                // Greedy connect from the other tree.
                loop {
                    match extend(&mut tree_b, &bridge, world, env_index, params.step_size, params.edge_resolution) {
                        Extend::Trapped => break,
                        Extend::Advanced(_) => {
                            nodes_expanded += 1;
                            if nodes_expanded >= params.max_nodes {
                                break;
                            }
                        }
                        Extend::Reached(b_idx) => {
                            nodes_expanded += 1;
                            let mut half_a = tree_a.path_to_root(new_idx);
                            half_a.reverse();
                            let half_b = tree_b.path_to_root(b_idx);
                            let mut path = half_a;
                            path.extend(half_b.into_iter().skip(1));
                            if !a_is_start {
                                path.reverse();
                            }
                            raw_path = Some(path);
                            break;
                        }
                    }
                }
            }
        }
        std::mem::swap(&mut tree_a, &mut tree_b);
        a_is_start = !a_is_start;
    }

    let mut path = raw_path.expect("loop exits with a path");

    // Shortcut smoothing; the first attempt always tries start-to-goal.
    let attempts = 60;
    for attempt in 0..attempts {
        if path.len() < 3 {
            break;
        }
        let (i, j) = if attempt == 0 {
            (0, path.len() - 1)
        } else {
            let i = rng.index(path.len() - 1);
            let j = i + 1 + rng.index(path.len() - i - 1);
            (i, j)
        };
        if j > i + 1 && segment_clear(world, env_index, &path[i], &path[j], params.edge_resolution)
        {
            path.drain(i + 1..j);
        }
    }

    // Re-discretize so consecutive waypoints stay within step_size.
    let mut waypoints = vec![path[0]];
    for k in 1..path.len() {
        let prev = *waypoints.last().unwrap();
        let next = path[k];
        let dist = joint_dist(&prev, &next);
        let steps = (dist / params.step_size).ceil().max(1.0) as usize;
        for s in 1..=steps {
            waypoints.push(lerp(&prev, &next, s as f64 / steps as f64));
        }
    }

    Ok(PlanResult {
        waypoints,
        smoothed: true,
        nodes_expanded,
        seed: params.seed,
    })
}

/// Independent full-resolution audit: re-interpolates the plan and checks
/// every configuration, without trusting any planner internals.
pub fn audit_plan(
    world: &WorldState,
    env_index: usize,
    plan: &PlanResult,
    resolution: f64,
) -> bool {
    if plan.waypoints.is_empty() {
        return false;
    }
    if arm_in_collision(world, env_index, &plan.waypoints[0]) {
        return false;
    }
    for pair in plan.waypoints.windows(2) {
        let dist = joint_dist(&pair[0], &pair[1]);
        let steps = (dist / resolution).ceil().max(1.0) as usize;
        for s in 1..=steps {
            let q = lerp(&pair[0], &pair[1], s as f64 / steps as f64);
            if arm_in_collision(world, env_index, &q) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecOutcome {
    pub arrived: bool,
    pub diverged: bool,
    /// Control steps consumed (each steps every env in the batch).
    pub steps: u32,
}

/// Track a plan through the control step with an arm-only mask. All envs
/// execute the same joint-space trajectory; arrival is measured on
/// `check_env`.
pub fn execute_plan(
    world: &mut WorldState,
    plan: &PlanResult,
    tracking_gain: f64,
    max_steps: u32,
    check_env: usize,
) -> Result<ExecOutcome, SimError> {
    const WAYPOINT_TOL: f64 = 0.05;
    const ARRIVE_TOL: f64 = 0.01;
    const MAX_DELTA: f64 = 0.1;

    let mask = dof_mask(ControlJoint::Arm);
    let goal = *plan.waypoints.last().expect("plans are nonempty");
    let num_envs = world.num_envs();

    let err_inf = |world: &WorldState| -> f64 {
        let q = world.envs[check_env].robot.arm_qpos;
        (0..ARM_DOF)
            .map(|i| (q[i] - goal[i]).abs())
            .fold(0.0, f64::max)
    };

    let mut cursor = 0usize;
    let mut steps = 0u32;
    let mut prev_err = err_inf(world);
    let mut growth_streak = 0u32;

    if plan.waypoints.len() == 1 || prev_err <= ARRIVE_TOL {
        return Ok(ExecOutcome {
            arrived: true,
            diverged: false,
            steps: 0,
        });
    }

    while steps < max_steps {
        let q = world.envs[check_env].robot.arm_qpos;
        while cursor + 1 < plan.waypoints.len() {
            let wp = &plan.waypoints[cursor];
            let err = (0..ARM_DOF)
                .map(|i| (q[i] - wp[i]).abs())
                .fold(0.0, f64::max);
            if err < WAYPOINT_TOL {
                cursor += 1;
            } else {
                break;
            }
        }
        let target = plan.waypoints[cursor];
        let mut action = vec![0.0; ARM_DOF];
        for i in 0..ARM_DOF {
            action[i] = (tracking_gain * (target[i] - q[i])).clamp(-MAX_DELTA, MAX_DELTA);
        }
        let batch: Vec<f64> = (0..num_envs).flat_map(|_| action.iter().copied()).collect();
        step_control(world, &batch, &mask)?;
        steps += 1;

        let err = err_inf(world);
        if cursor + 1 == plan.waypoints.len() && err <= ARRIVE_TOL {
            return Ok(ExecOutcome {
                arrived: true,
                diverged: false,
                steps,
            });
        }
        if err > prev_err + 1e-12 {
            growth_streak += 1;
            if growth_streak >= 20 {
                return Ok(ExecOutcome {
                    arrived: false,
                    diverged: true,
                    steps,
                });
            }
        } else {
            growth_streak = 0;
        }
        prev_err = err;
    }

    Ok(ExecOutcome {
        arrived: false,
        diverged: false,
        steps,
    })
}
