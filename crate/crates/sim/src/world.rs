//! Vectorized kinematic world stepped at 120 Hz physics / 20 Hz control.
//!
//! Bodies are position-targeted, free objects settle under a gravity proxy,
//! grasping is a rule-based rigid attachment, and articulations move when the
//! hand engages their handle. Every environment owns a counter-based RNG
//! stream, so results are bit-identical for any worker count.

use std::sync::Arc;

use dexgen_core::catalog::Catalog;
use dexgen_core::math::{Quat, Vec3};
use dexgen_core::rng::CounterRng;
use dexgen_core::scenegen::lint::{error_count, lint_scene};
use dexgen_core::scenegen::{Pose, SceneConfig, TableSpec};

use crate::collision::{collide, sphere_box, Collider, Shape};
use crate::mask::DofMask;
use crate::model::{forward_kinematics, RobotModel, ARM_DOF, HAND_DOF};
use crate::SimError;

pub const PHYSICS_DT: f64 = 1.0 / 120.0;
pub const CONTROL_DECIMATION: u32 = 6;
pub const CONTROL_DT: f64 = PHYSICS_DT * CONTROL_DECIMATION as f64;
pub const GRAVITY: f64 = 9.81;
/// Proxy contact force: depth * stiffness / physics_dt.
pub const CONTACT_STIFFNESS: f64 = 2.0;
/// Mean hand flexion below which a grasp or handle engagement releases.
pub const RELEASE_APERTURE: f64 = 0.2;
/// Mean hand flexion above which a handle can be engaged.
pub const ENGAGE_APERTURE: f64 = 0.55;
/// Palm-to-handle distance for engagement.
pub const ENGAGE_DISTANCE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspRule {
    /// Finger groups (thumb mandatory among them) that must exceed the force
    /// threshold simultaneously.
    pub min_groups: usize,
    pub force_threshold: f64,
}

impl Default for GraspRule {
    fn default() -> Self {
        GraspRule {
            min_groups: 3,
            force_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassClass {
    Light,
    Heavy,
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyState {
    pub name: String,
    pub pose: Pose,
    pub lin_vel: Vec3,
    pub ang_vel: Vec3,
    pub shape: Shape,
    pub mass_class: MassClass,
    pub graspable: bool,
}

impl BodyState {
    fn collider(&self) -> Collider {
        Collider::new(self.pose.p, &self.pose.q, self.shape)
    }

    pub fn bottom(&self) -> f64 {
        self.pose.p.z() - self.shape.half_extents().z()
    }

    pub fn top(&self) -> f64 {
        self.pose.p.z() + self.shape.half_extents().z()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointType {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArticulationState {
    pub name: String,
    pub base_pose: Pose,
    pub half: Vec3,
    pub qpos: f64,
    pub qvel: f64,
    pub limits: (f64, f64),
    pub open_target: f64,
    pub close_target: f64,
    pub joint_type: JointType,
    /// Joint axis and pivot in the articulation base frame.
    pub joint_axis: Vec3,
    pub joint_origin: Vec3,
    /// Handle point in the moving-link frame.
    pub handle_offset: Vec3,
    pub engaged: bool,
}

impl ArticulationState {
    fn collider(&self) -> Collider {
        Collider::new(
            self.base_pose.p,
            &self.base_pose.q,
            Shape::Box { half: self.half },
        )
    }

    /// World position of the handle point at the current joint value.
    pub fn handle_world(&self) -> Vec3 {
        let local = match self.joint_type {
            JointType::Prismatic => self.handle_offset + self.joint_axis * self.qpos,
            JointType::Revolute => {
                let rot = Quat::from_axis_angle(self.joint_axis, self.qpos);
                self.joint_origin + rot.rotate(&(self.handle_offset - self.joint_origin))
            }
        };
        self.base_pose.transform_point(&local)
    }

    /// World-space derivative of the handle point w.r.t. qpos.
    fn handle_tangent(&self) -> Vec3 {
        match self.joint_type {
            JointType::Prismatic => self.base_pose.q.rotate(&self.joint_axis),
            JointType::Revolute => {
                let axis_world = self.base_pose.q.rotate(&self.joint_axis);
                let handle = self.handle_world();
                let pivot = self.base_pose.transform_point(&self.joint_origin);
                axis_world.cross(&(handle - pivot))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub arm_qpos: [f64; ARM_DOF],
    pub hand_qpos: [f64; HAND_DOF],
    pub arm_qvel: [f64; ARM_DOF],
    pub hand_qvel: [f64; HAND_DOF],
    pub palm: Pose,
    pub tips: [Pose; 5],
    pub attached: Option<usize>,
    pub attach_rel: Pose,
}

/// Everything that gets restored when an episode resets to a saved state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSnapshot {
    pub robot: RobotState,
    pub bodies: Vec<BodyState>,
    pub articulations: Vec<ArticulationState>,
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub robot: RobotState,
    pub bodies: Vec<BodyState>,
    pub articulations: Vec<ArticulationState>,
    pub rng: CounterRng,
    pub episode_step: u32,
    prev_palm_p: Vec3,
}

impl EnvState {
    pub fn mean_flexion(&self) -> f64 {
        self.robot.hand_qpos.iter().sum::<f64>() / HAND_DOF as f64
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            robot: self.robot.clone(),
            bodies: self.bodies.clone(),
            articulations: self.articulations.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ResetOptions {
    pub num_envs: usize,
    pub seed: u64,
    pub pos_jitter: f64,
    pub yaw_jitter: f64,
    pub episode_limit: u32,
    pub allow_unclean: bool,
}

impl Default for ResetOptions {
    fn default() -> Self {
        ResetOptions {
            num_envs: 1,
            seed: 0,
            pos_jitter: 0.02,
            yaw_jitter: 0.1,
            episode_limit: 400,
            allow_unclean: false,
        }
    }
}

/// Per-env contact record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub a: ColliderRef,
    pub b: ColliderRef,
    pub depth: f64,
    pub normal: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ColliderRef {
    /// Fingertip by group index (0..5 = th, ff, mf, rf, lf).
    Tip(usize),
    Palm,
    Body(usize),
    Articulation(usize),
    Table,
}

#[derive(Debug, Clone)]
struct BodyTemplate {
    body: BodyState,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub model: Arc<RobotModel>,
    pub base_pose: Pose,
    pub table: TableSpec,
    pub envs: Vec<EnvState>,
    pub episode_limit: u32,
    pub seed: u64,
    pub workers: usize,
    body_templates: Vec<BodyTemplate>,
    articulation_templates: Vec<ArticulationState>,
}

fn articulation_from(
    name: &str,
    record: &dexgen_core::catalog::AssetRecord,
    pose: Pose,
    scale: f64,
    init_qpos: f64,
) -> ArticulationState {
    let half = record.nominal_dims * (scale * 0.5);
    let (lo, hi) = record.default_joint_limits.unwrap_or((0.0, 1.57));
    let prismatic = record.category == "drawer";
    let (joint_type, joint_axis, joint_origin, handle_offset) = if prismatic {
        (
            JointType::Prismatic,
            Vec3::X,
            Vec3::ZERO,
            Vec3::new(half.x() + 0.02, 0.0, 0.0),
        )
    } else {
        // Front door hinged on the left vertical edge, handle on the right
        // at three-quarter height.
        (
            JointType::Revolute,
            Vec3::Z,
            Vec3::new(half.x(), half.y(), 0.0),
            Vec3::new(half.x() + 0.03, -half.y() * 0.7, half.z() * 0.5),
        )
    };
    ArticulationState {
        name: name.to_string(),
        base_pose: pose,
        half,
        qpos: init_qpos.clamp(lo, hi),
        qvel: 0.0,
        limits: (lo, hi),
        open_target: lo + 0.9 * (hi - lo),
        close_target: lo,
        joint_type,
        joint_axis,
        joint_origin,
        handle_offset,
        engaged: false,
    }
}

/// Build a vectorized world from a lint-clean scene configuration.
pub fn reset(
    config: &SceneConfig,
    catalog: &Catalog,
    opts: &ResetOptions,
) -> Result<WorldState, SimError> {
    let findings = lint_scene(config, catalog).map_err(SimError::Scene)?;
    if error_count(&findings) > 0 && !opts.allow_unclean {
        let summary: Vec<String> = findings
            .iter()
            .filter(|f| f.severity == dexgen_core::scenegen::Severity::Error)
            .map(|f| format!("{:?} {}: {}", f.code, f.object, f.detail))
            .collect();
        return Err(SimError::UncleanScene(summary.join("; ")));
    }

    let model = Arc::new(RobotModel::builtin());
    let mut body_templates = Vec::new();
    let mut articulation_templates = Vec::new();

    let mut objects: Vec<_> = config.objects.iter().collect();
    objects.sort_by(|a, b| a.name.cmp(&b.name));
    for obj in objects {
        let record = catalog
            .get(&obj.asset_id)
            .ok_or_else(|| SimError::UnknownAsset(obj.asset_id.clone()))?;
        if record.articulated {
            articulation_templates.push(articulation_from(
                &obj.name,
                record,
                obj.pose,
                obj.scale,
                obj.init_qpos.unwrap_or(0.0),
            ));
        } else {
            let dims = record.nominal_dims * obj.scale;
            let shape = if record.has_tag("spherical") {
                Shape::Sphere {
                    radius: dims.0.iter().fold(0.0_f64, |a, b| a.max(*b)) / 2.0,
                }
            } else {
                Shape::Box { half: dims * 0.5 }
            };
            let mass_class = if obj.is_static {
                MassClass::Static
            } else if dims.0.iter().fold(0.0_f64, |a, b| a.max(*b)) < 0.15 {
                MassClass::Light
            } else {
                MassClass::Heavy
            };
            body_templates.push(BodyTemplate {
                body: BodyState {
                    name: obj.name.clone(),
                    pose: obj.pose,
                    lin_vel: Vec3::ZERO,
                    ang_vel: Vec3::ZERO,
                    shape,
                    mass_class,
                    graspable: record.graspable,
                },
            });
        }
    }

    let mut world = WorldState {
        model,
        base_pose: config.robot_base,
        table: config.table,
        envs: Vec::with_capacity(opts.num_envs),
        episode_limit: opts.episode_limit,
        seed: opts.seed,
        workers: 1,
        body_templates,
        articulation_templates,
    };

    for env_index in 0..opts.num_envs {
        let rng = CounterRng::new(opts.seed, env_index as u64);
        let mut env = EnvState {
            robot: world.fresh_robot(),
            bodies: Vec::new(),
            articulations: Vec::new(),
            rng,
            episode_step: 0,
            prev_palm_p: Vec3::ZERO,
        };
        world.populate_env(&mut env, opts.pos_jitter, opts.yaw_jitter);
        world.envs.push(env);
    }
    Ok(world)
}

impl WorldState {
    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn body_index(&self, name: &str) -> Option<usize> {
        self.body_templates.iter().position(|t| t.body.name == name)
    }

    pub fn articulation_index(&self, name: &str) -> Option<usize> {
        self.articulation_templates
            .iter()
            .position(|t| t.name == name)
    }

    pub fn body_names(&self) -> Vec<&str> {
        self.body_templates
            .iter()
            .map(|t| t.body.name.as_str())
            .collect()
    }

    fn fresh_robot(&self) -> RobotState {
        let arm = self.model.home_arm_qpos;
        let hand = [0.0; HAND_DOF];
        let fk = forward_kinematics(&self.model, &self.base_pose, &arm, &hand);
        RobotState {
            arm_qpos: arm,
            hand_qpos: hand,
            arm_qvel: [0.0; ARM_DOF],
            hand_qvel: [0.0; HAND_DOF],
            palm: fk.palm,
            tips: fk.tips,
            attached: None,
            attach_rel: Pose::identity(),
        }
    }

    /// Fill an env with jittered template bodies; articulations start at
    /// their configured joint value. The env's RNG stream continues across
    /// resets.
    fn populate_env(&self, env: &mut EnvState, pos_jitter: f64, yaw_jitter: f64) {
        env.robot = self.fresh_robot();
        env.prev_palm_p = env.robot.palm.p;
        env.episode_step = 0;
        env.bodies.clear();
        env.articulations = self.articulation_templates.clone();
        for art in &mut env.articulations {
            art.engaged = false;
            art.qvel = 0.0;
        }
        for template in &self.body_templates {
            let mut body = template.body.clone();
            if body.mass_class != MassClass::Static {
                let dx = env.rng.jitter(pos_jitter);
                let dy = env.rng.jitter(pos_jitter);
                let dyaw = env.rng.jitter(yaw_jitter);
                body.pose.p = body.pose.p + Vec3::new(dx, dy, 0.0);
                if dyaw != 0.0 {
                    body.pose.q = Quat::from_yaw(dyaw)
                        .mul(&body.pose.q)
                        .normalized()
                        .canonical();
                }
            }
            env.bodies.push(body);
        }
    }

    /// Re-randomize one env in place (episode boundary).
    pub fn reset_env(&mut self, env_index: usize, pos_jitter: f64, yaw_jitter: f64) {
        let placeholder = EnvState {
            robot: self.fresh_robot(),
            bodies: Vec::new(),
            articulations: Vec::new(),
            rng: CounterRng::new(0, 0),
            episode_step: 0,
            prev_palm_p: Vec3::ZERO,
        };
        let mut env = std::mem::replace(&mut self.envs[env_index], placeholder);
        self.populate_env(&mut env, pos_jitter, yaw_jitter);
        self.envs[env_index] = env;
    }

    /// Restore an env's physical state from a snapshot, preserving the env's
    /// RNG stream; the episode counter restarts.
    pub fn restore_env(&mut self, env_index: usize, snapshot: &EnvSnapshot) {
        let env = &mut self.envs[env_index];
        env.robot = snapshot.robot.clone();
        env.bodies = snapshot.bodies.clone();
        env.articulations = snapshot.articulations.clone();
        env.episode_step = 0;
        env.prev_palm_p = env.robot.palm.p;
    }



}

/// Advance one control step: expand masked actions to joint-delta targets,
/// integrate six physics sub-steps with velocity clamping, settle free
/// bodies, and carry attachments.
pub fn step_control(
    world: &mut WorldState,
    actions: &[f64],
    mask: &DofMask,
) -> Result<(), SimError> {
    let act_dim = mask.active_count();
    let num_envs = world.envs.len();
    if actions.len() != act_dim * num_envs {
        return Err(SimError::ActionShape {
            expected: act_dim * num_envs,
            found: actions.len(),
        });
    }
    if actions.iter().any(|a| !a.is_finite()) {
        return Err(SimError::NonFiniteAction);
    }

    let workers = world.workers.max(1).min(num_envs.max(1));
    // Immutable world facts are copied out so env chunks can run in
    // parallel without aliasing the world.
    let model = world.model.clone();
    let base_pose = world.base_pose;
    let table = world.table;
    let shadow = WorldView {
        model: &model,
        base_pose,
        table,
    };

    let chunk = num_envs.div_ceil(workers);
    std::thread::scope(|scope| {
        for (chunk_index, envs) in world.envs.chunks_mut(chunk).enumerate() {
            let actions = &actions[chunk_index * chunk * act_dim..];
            let shadow = &shadow;
            scope.spawn(move || {
                for (k, env) in envs.iter_mut().enumerate() {
                    let offset = k * act_dim;
                    step_env(shadow, env, &actions[offset..offset + act_dim], mask);
                }
            });
        }
    });
    Ok(())
}

/// Immutable per-step world facts shared across env workers.
struct WorldView<'a> {
    model: &'a RobotModel,
    base_pose: Pose,
    table: TableSpec,
}

fn step_env(view: &WorldView<'_>, env: &mut EnvState, action: &[f64], mask: &DofMask) {
    let (arm_delta, hand_delta) = mask.expand(action);
    let arm_limits = view.model.arm_limits();
    let hand_limits = view.model.hand_limits();

    // Masked joints keep their exact current value as the target; active
    // joints get a limit-clamped delta target.
    let mut arm_target = env.robot.arm_qpos;
    for i in 0..ARM_DOF {
        if mask.arm[i] {
            arm_target[i] =
                (arm_target[i] + arm_delta[i]).clamp(arm_limits[i].0, arm_limits[i].1);
        }
    }
    let mut hand_target = env.robot.hand_qpos;
    for i in 0..HAND_DOF {
        if mask.hand[i] {
            hand_target[i] =
                (hand_target[i] + hand_delta[i]).clamp(hand_limits[i].0, hand_limits[i].1);
        }
    }

    let arm_q0 = env.robot.arm_qpos;
    let hand_q0 = env.robot.hand_qpos;
    let palm_start = env.robot.palm.p;

    let mut arm_vel_steps = [0.0; ARM_DOF];
    for (i, joint) in view.model.arm.iter().enumerate() {
        arm_vel_steps[i] = joint.vel_limit * PHYSICS_DT;
    }
    let hand_vel_steps: Vec<f64> = view
        .model
        .fingers
        .iter()
        .flat_map(|f| f.joints.iter().map(|j| j.vel_limit * PHYSICS_DT))
        .collect();

    for _ in 0..CONTROL_DECIMATION {
        let palm_before = env.robot.palm.p;

        for i in 0..ARM_DOF {
            let diff = arm_target[i] - env.robot.arm_qpos[i];
            let step = diff.clamp(-arm_vel_steps[i], arm_vel_steps[i]);
            env.robot.arm_qpos[i] += step;
        }
        for i in 0..HAND_DOF {
            let diff = hand_target[i] - env.robot.hand_qpos[i];
            let step = diff.clamp(-hand_vel_steps[i], hand_vel_steps[i]);
            env.robot.hand_qpos[i] += step;
        }

        let fk = forward_kinematics(
            view.model,
            &view.base_pose,
            &env.robot.arm_qpos,
            &env.robot.hand_qpos,
        );
        env.robot.palm = fk.palm;
        env.robot.tips = fk.tips;

        // Attached body rides the palm rigidly.
        if let Some(body_index) = env.robot.attached {
            let pose = env.robot.palm.compose(&env.robot.attach_rel);
            env.bodies[body_index].pose = pose;
            env.bodies[body_index].lin_vel =
                (env.robot.palm.p - palm_before) * (1.0 / PHYSICS_DT);
        }

        // Engaged articulation follows the palm along its one degree of
        // freedom.
        let palm_delta = env.robot.palm.p - palm_before;
        for art in &mut env.articulations {
            if !art.engaged {
                continue;
            }
            let tangent = art.handle_tangent();
            let t2 = tangent.dot(&tangent);
            if t2 < 1e-9 {
                continue;
            }
            let dq = palm_delta.dot(&tangent) / t2;
            let max_dq = 3.0 * PHYSICS_DT;
            let dq = dq.clamp(-max_dq, max_dq);
            let next = (art.qpos + dq).clamp(art.limits.0, art.limits.1);
            art.qvel = (next - art.qpos) / PHYSICS_DT;
            art.qpos = next;
        }

        // Gravity proxy on free bodies.
        for i in 0..env.bodies.len() {
            if env.bodies[i].mass_class == MassClass::Static
                || Some(i) == env.robot.attached
            {
                continue;
            }
            let support = {
                let view_support = WorldSupport {
                    table: &view.table,
                };
                view_support.support_under(env, i)
            };
            let body = &mut env.bodies[i];
            let airborne = body.bottom() > support + 1e-9 || body.lin_vel.norm() > 1e-9;
            if airborne {
                body.lin_vel[2] -= GRAVITY * PHYSICS_DT;
                body.pose.p = body.pose.p + body.lin_vel * PHYSICS_DT;
                if body.bottom() <= support {
                    let half_z = body.shape.half_extents().z();
                    body.pose.p[2] = support + half_z;
                    body.lin_vel = Vec3::ZERO;
                }
            }
        }
    }

    for i in 0..ARM_DOF {
        env.robot.arm_qvel[i] = (env.robot.arm_qpos[i] - arm_q0[i]) / CONTROL_DT;
    }
    for i in 0..HAND_DOF {
        env.robot.hand_qvel[i] = (env.robot.hand_qpos[i] - hand_q0[i]) / CONTROL_DT;
    }
    env.prev_palm_p = palm_start;
    env.episode_step += 1;
}

/// Support lookup shared between stepping and settling.
struct WorldSupport<'a> {
    table: &'a TableSpec,
}

impl WorldSupport<'_> {
    fn support_under(&self, env: &EnvState, body_index: usize) -> f64 {
        let body = &env.bodies[body_index];
        let bottom = body.bottom();
        let mut support = 0.0_f64;
        let slab = self.table.slab();
        if slab.contains_xy(&body.pose.p) {
            support = support.max(self.table.height);
        }
        for (j, other) in env.bodies.iter().enumerate() {
            if j == body_index {
                continue;
            }
            let oc = other.collider();
            let half = oc.shape.half_extents();
            let dx = (body.pose.p.x() - oc.center.x()).abs();
            let dy = (body.pose.p.y() - oc.center.y()).abs();
            if dx <= half.x() && dy <= half.y() && oc.aabb_top() <= bottom + 0.01 {
                support = support.max(oc.aabb_top());
            }
        }
        for art in &env.articulations {
            let dx = (body.pose.p.x() - art.base_pose.p.x()).abs();
            let dy = (body.pose.p.y() - art.base_pose.p.y()).abs();
            if dx <= art.half.x()
                && dy <= art.half.y()
                && art.base_pose.p.z() + art.half.z() <= bottom + 0.01
            {
                support = support.max(art.base_pose.p.z() + art.half.z());
            }
        }
        support
    }
}

/// Hand-relevant contacts for one env: fingertips and palm against bodies
/// and articulations, plus body-body pairs. Deterministic order.
pub fn env_contacts(world: &WorldState, env_index: usize) -> Vec<Contact> {
    let env = &world.envs[env_index];
    let mut contacts = Vec::new();

    let tip_refs: Vec<(ColliderRef, Vec3, f64)> = env
        .robot
        .tips
        .iter()
        .enumerate()
        .map(|(i, tip)| {
            (
                ColliderRef::Tip(i),
                tip.p,
                world.model.fingers[i].tip_radius,
            )
        })
        .chain(std::iter::once((
            ColliderRef::Palm,
            env.robot.palm.p,
            world.model.palm_radius,
        )))
        .collect();

    for (reference, center, radius) in &tip_refs {
        for (bi, body) in env.bodies.iter().enumerate() {
            if let Some(c) = sphere_box(center, *radius, &body.collider()) {
                contacts.push(Contact {
                    a: *reference,
                    b: ColliderRef::Body(bi),
                    depth: c.depth,
                    normal: c.normal,
                });
            }
        }
        for (ai, art) in env.articulations.iter().enumerate() {
            if let Some(c) = sphere_box(center, *radius, &art.collider()) {
                contacts.push(Contact {
                    a: *reference,
                    b: ColliderRef::Articulation(ai),
                    depth: c.depth,
                    normal: c.normal,
                });
            }
        }
    }

    for i in 0..env.bodies.len() {
        for j in (i + 1)..env.bodies.len() {
            if let Some(c) = collide(&env.bodies[i].collider(), &env.bodies[j].collider()) {
                contacts.push(Contact {
                    a: ColliderRef::Body(i),
                    b: ColliderRef::Body(j),
                    depth: c.depth,
                    normal: c.normal,
                });
            }
        }
        for (ai, art) in env.articulations.iter().enumerate() {
            if let Some(c) = collide(&env.bodies[i].collider(), &art.collider()) {
                contacts.push(Contact {
                    a: ColliderRef::Body(i),
                    b: ColliderRef::Articulation(ai),
                    depth: c.depth,
                    normal: c.normal,
                });
            }
        }
    }
    contacts
}

/// All envs' contact lists.
pub fn check_collision(world: &WorldState) -> Vec<Vec<Contact>> {
    (0..world.envs.len())
        .map(|i| env_contacts(world, i))
        .collect()
}

/// Mean proxy force magnitude per hand group against one body, group order
/// [th, ff, mf, rf, lf, palm].
pub fn contact_forces(
    world: &WorldState,
    env_index: usize,
    body_index: usize,
) -> Result<[f64; 6], SimError> {
    let env = &world.envs[env_index];
    if body_index >= env.bodies.len() {
        return Err(SimError::UnknownBodyIndex(body_index));
    }
    let body = &env.bodies[body_index];
    let collider = body.collider();
    let mut forces = [0.0; 6];
    for (i, tip) in env.robot.tips.iter().enumerate() {
        if let Some(c) = sphere_box(&tip.p, world.model.fingers[i].tip_radius, &collider) {
            forces[i] = c.depth * CONTACT_STIFFNESS / PHYSICS_DT;
        }
    }
    if let Some(c) = sphere_box(&env.robot.palm.p, world.model.palm_radius, &collider) {
        forces[5] = c.depth * CONTACT_STIFFNESS / PHYSICS_DT;
    }
    Ok(forces)
}

/// Per-env force table for every body (body-major).
pub fn contact_forces_all(world: &WorldState, body_index: usize) -> Result<Vec<[f64; 6]>, SimError> {
    (0..world.envs.len())
        .map(|i| contact_forces(world, i, body_index))
        .collect()
}

/// Apply the grasp/release and handle-engagement rules.
pub fn grasp_update(world: &mut WorldState, rule: &GraspRule) {
    let num_envs = world.envs.len();
    for env_index in 0..num_envs {
        let aperture = world.envs[env_index].mean_flexion();

        // Release attached bodies when the hand opens.
        if let Some(body_index) = world.envs[env_index].robot.attached {
            if aperture < RELEASE_APERTURE {
                let palm_p = world.envs[env_index].robot.palm.p;
                let prev = world.envs[env_index].prev_palm_p;
                let vel = (palm_p - prev) * (1.0 / CONTROL_DT);
                let env = &mut world.envs[env_index];
                env.robot.attached = None;
                env.bodies[body_index].lin_vel = vel;
            }
        } else {
            // Attachment: thumb mandatory plus min_groups total groups above
            // the force threshold.
            let mut best: Option<(usize, f64)> = None;
            for body_index in 0..world.envs[env_index].bodies.len() {
                if !world.envs[env_index].bodies[body_index].graspable {
                    continue;
                }
                let forces = contact_forces(world, env_index, body_index).expect("index valid");
                let thumb_holds = forces[0] > rule.force_threshold;
                let groups = forces[..5]
                    .iter()
                    .filter(|f| **f > rule.force_threshold)
                    .count();
                if thumb_holds && groups >= rule.min_groups {
                    let dist = (world.envs[env_index].bodies[body_index].pose.p
                        - world.envs[env_index].robot.palm.p)
                        .norm();
                    if best.map(|(_, d)| dist < d).unwrap_or(true) {
                        best = Some((body_index, dist));
                    }
                }
            }
            if let Some((body_index, _)) = best {
                let env = &mut world.envs[env_index];
                env.robot.attached = Some(body_index);
                env.robot.attach_rel = env.robot.palm.inverse().compose(&env.bodies[body_index].pose);
                env.bodies[body_index].lin_vel = Vec3::ZERO;
            }
        }

        // Handle engagement for articulations.
        let env = &mut world.envs[env_index];
        let palm_p = env.robot.palm.p;
        let holding = env.robot.attached.is_some();
        for art in &mut env.articulations {
            if art.engaged {
                if aperture < RELEASE_APERTURE {
                    art.engaged = false;
                    art.qvel = 0.0;
                }
            } else if !holding
                && aperture > ENGAGE_APERTURE
                && (art.handle_world() - palm_p).norm() < ENGAGE_DISTANCE
            {
                art.engaged = true;
            }
        }
    }
}
