//! Declarative reward terms and success/fail predicates.
//!
//! These documents stand in for generated reward/evaluation code: the model
//! (or task author) emits JSON, validation resolves every reference against
//! the scene up front, and the executed artifact is always this spec.

use serde::{Deserialize, Serialize};

use dexgen_core::math::{Quat, Vec3};
use dexgen_sim::world::{contact_forces, WorldState};

use crate::LearnError;

/// Reference to a scene entity, robot feature, or literal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ref {
    Object { name: String },
    Palm,
    Tip { index: usize },
    Handle { name: String },
    Qpos { name: String },
    OpenTarget { name: String },
    CloseTarget { name: String },
    Point { p: [f64; 3] },
    PoseLit { p: [f64; 3], q: [f64; 4] },
    Scalar { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shaping {
    NegL2,
    ExpDecay { scale: f64 },
}

impl Shaping {
    fn apply(&self, value: f64) -> f64 {
        match self {
            Shaping::NegL2 => -value,
            Shaping::ExpDecay { scale } => (-value / scale).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Distance,
    Orientation,
    Contact,
    JointTarget,
    ActionPenalty,
    LiftHeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardTerm {
    pub kind: TermKind,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<Ref>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Ref>,
    pub shaping: Shaping,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub terms: Vec<RewardTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    DistanceBelow {
        subject: Ref,
        target: Ref,
        threshold: f64,
    },
    /// Articulation joint at or beyond a fraction of its open target.
    QposBeyond { name: String, fraction: f64 },
    HeightAbove { subject: Ref, z: f64 },
    OrientationWithin {
        subject: Ref,
        target: Ref,
        angle: f64,
    },
    /// Conjunction of predicates; used for gates that require a stage's
    /// full success condition.
    AllOf { preds: Vec<Predicate> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailPredicate {
    DroppedBelowZ { object: String, z: f64 },
    /// Object farther than this horizontal radius from the robot base.
    OutOfWorkspace { object: String, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub success: Vec<Predicate>,
    #[serde(default)]
    pub fail: Vec<FailPredicate>,
    /// Episode timeout counts as failure only when set; by default a timed
    /// out episode is neither success nor failure.
    #[serde(default)]
    pub timeout_is_failure: bool,
}

/// Reward + evaluation for one stage, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageLearnSpec {
    pub reward: RewardSpec,
    pub eval: EvalSpec,
}

impl StageLearnSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(text: &str) -> Result<StageLearnSpec, LearnError> {
        serde_json::from_str(text).map_err(|e| LearnError::SpecParse(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ResolvedRef {
    Body(usize),
    Palm,
    Tip(usize),
    Handle(usize),
    Qpos(usize),
    OpenTarget(usize),
    CloseTarget(usize),
    Point(Vec3),
    Pose(Vec3, Quat),
    Scalar(f64),
}

#[derive(Debug, Clone)]
struct ResolvedTerm {
    kind: TermKind,
    weight: f64,
    subject: Option<ResolvedRef>,
    target: Option<ResolvedRef>,
    shaping: Shaping,
    gate: Option<ResolvedPredicate>,
}

#[derive(Debug, Clone)]
enum ResolvedPredicate {
    DistanceBelow(ResolvedRef, ResolvedRef, f64),
    QposBeyond(usize, f64),
    HeightAbove(ResolvedRef, f64),
    OrientationWithin(ResolvedRef, ResolvedRef, f64),
    AllOf(Vec<ResolvedPredicate>),
}

#[derive(Debug, Clone)]
enum ResolvedFail {
    DroppedBelowZ(usize, f64),
    OutOfWorkspace(usize, f64),
}

/// Spec with every reference resolved to an index; building one performs the
/// full validation pass so nothing can fail mid-training.
#[derive(Debug, Clone)]
pub struct ResolvedSpec {
    terms: Vec<ResolvedTerm>,
    success: Vec<ResolvedPredicate>,
    fail: Vec<ResolvedFail>,
    pub timeout_is_failure: bool,
    /// Body indices referenced anywhere, sorted; used for observations.
    pub observed_bodies: Vec<usize>,
    /// Articulation indices referenced anywhere, sorted.
    pub observed_articulations: Vec<usize>,
    /// Literal points referenced anywhere, in spec order.
    pub observed_points: Vec<Vec3>,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub success: Vec<bool>,
    pub fail: Vec<bool>,
}

fn resolve_ref(r: &Ref, world: &WorldState) -> Result<ResolvedRef, LearnError> {
    Ok(match r {
        Ref::Object { name } => ResolvedRef::Body(
            world
                .body_index(name)
                .ok_or_else(|| LearnError::UnresolvedReference(name.clone()))?,
        ),
        Ref::Palm => ResolvedRef::Palm,
        Ref::Tip { index } => {
            if *index >= 5 {
                return Err(LearnError::UnresolvedReference(format!("tip {index}")));
            }
            ResolvedRef::Tip(*index)
        }
        Ref::Handle { name } => ResolvedRef::Handle(
            world
                .articulation_index(name)
                .ok_or_else(|| LearnError::UnresolvedReference(name.clone()))?,
        ),
        Ref::Qpos { name } => ResolvedRef::Qpos(
            world
                .articulation_index(name)
                .ok_or_else(|| LearnError::UnresolvedReference(name.clone()))?,
        ),
        Ref::OpenTarget { name } => ResolvedRef::OpenTarget(
            world
                .articulation_index(name)
                .ok_or_else(|| LearnError::UnresolvedReference(name.clone()))?,
        ),
        Ref::CloseTarget { name } => ResolvedRef::CloseTarget(
            world
                .articulation_index(name)
                .ok_or_else(|| LearnError::UnresolvedReference(name.clone()))?,
        ),
        Ref::Point { p } => ResolvedRef::Point(Vec3::new(p[0], p[1], p[2])),
        Ref::PoseLit { p, q } => ResolvedRef::Pose(
            Vec3::new(p[0], p[1], p[2]),
            Quat::new(q[0], q[1], q[2], q[3]).normalized().canonical(),
        ),
        Ref::Scalar { value } => ResolvedRef::Scalar(*value),
    })
}

fn resolve_predicate(p: &Predicate, world: &WorldState) -> Result<ResolvedPredicate, LearnError> {
    Ok(match p {
        Predicate::DistanceBelow {
            subject,
            target,
            threshold,
        } => ResolvedPredicate::DistanceBelow(
            resolve_ref(subject, world)?,
            resolve_ref(target, world)?,
            *threshold,
        ),
        Predicate::QposBeyond { name, fraction } => ResolvedPredicate::QposBeyond(
            world
                .articulation_index(name)
                .ok_or_else(|| LearnError::UnresolvedReference(name.clone()))?,
            *fraction,
        ),
        Predicate::HeightAbove { subject, z } => {
            ResolvedPredicate::HeightAbove(resolve_ref(subject, world)?, *z)
        }
        Predicate::OrientationWithin {
            subject,
            target,
            angle,
        } => ResolvedPredicate::OrientationWithin(
            resolve_ref(subject, world)?,
            resolve_ref(target, world)?,
            *angle,
        ),
        Predicate::AllOf { preds } => ResolvedPredicate::AllOf(
            preds
                .iter()
                .map(|p| resolve_predicate(p, world))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    })
}

fn collect_observed(
    r: &ResolvedRef,
    bodies: &mut Vec<usize>,
    articulations: &mut Vec<usize>,
    points: &mut Vec<Vec3>,
) {
    match r {
        ResolvedRef::Body(i) => bodies.push(*i),
        ResolvedRef::Handle(i)
        | ResolvedRef::Qpos(i)
        | ResolvedRef::OpenTarget(i)
        | ResolvedRef::CloseTarget(i) => articulations.push(*i),
        ResolvedRef::Point(p) | ResolvedRef::Pose(p, _) => points.push(*p),
        _ => {}
    }
}

/// Validate and resolve a stage spec against a world.
pub fn resolve_spec(spec: &StageLearnSpec, world: &WorldState) -> Result<ResolvedSpec, LearnError> {
    if spec.eval.success.is_empty() {
        return Err(LearnError::SpecInvalid(
            "at least one success predicate required".into(),
        ));
    }
    let non_penalty = spec
        .reward
        .terms
        .iter()
        .any(|t| t.kind != TermKind::ActionPenalty);
    if !non_penalty {
        return Err(LearnError::SpecInvalid(
            "reward needs at least one non-penalty term".into(),
        ));
    }
    for t in &spec.reward.terms {
        if !t.weight.is_finite() {
            return Err(LearnError::SpecInvalid("non-finite term weight".into()));
        }
    }

    let mut bodies = Vec::new();
    let mut articulations = Vec::new();
    let mut points = Vec::new();

    let mut terms = Vec::new();
    for term in &spec.reward.terms {
        let subject = term
            .subject
            .as_ref()
            .map(|r| resolve_ref(r, world))
            .transpose()?;
        let target = term
            .target
            .as_ref()
            .map(|r| resolve_ref(r, world))
            .transpose()?;
        // Structural requirements per kind.
        match term.kind {
            TermKind::Distance | TermKind::Orientation => {
                if subject.is_none() || target.is_none() {
                    return Err(LearnError::SpecInvalid(format!(
                        "{:?} term needs subject and target",
                        term.kind
                    )));
                }
            }
            TermKind::Contact => {
                if !matches!(subject, Some(ResolvedRef::Body(_))) {
                    return Err(LearnError::SpecInvalid(
                        "contact term subject must be an object".into(),
                    ));
                }
            }
            TermKind::JointTarget => {
                if !matches!(subject, Some(ResolvedRef::Qpos(_))) || target.is_none() {
                    return Err(LearnError::SpecInvalid(
                        "joint_target term needs a qpos subject and a target".into(),
                    ));
                }
            }
            TermKind::ActionPenalty => {}
            TermKind::LiftHeight => {
                if subject.is_none() || target.is_none() {
                    return Err(LearnError::SpecInvalid(
                        "lift_height term needs subject and target".into(),
                    ));
                }
            }
        }
        if let Some(r) = &subject {
            collect_observed(r, &mut bodies, &mut articulations, &mut points);
        }
        if let Some(r) = &target {
            collect_observed(r, &mut bodies, &mut articulations, &mut points);
        }
        let gate = term
            .gate
            .as_ref()
            .map(|p| resolve_predicate(p, world))
            .transpose()?;
        terms.push(ResolvedTerm {
            kind: term.kind,
            weight: term.weight,
            subject,
            target,
            shaping: term.shaping,
            gate,
        });
    }

    let mut success = Vec::new();
    for p in &spec.eval.success {
        let resolved = resolve_predicate(p, world)?;
        fn observe_predicate(
            p: &ResolvedPredicate,
            bodies: &mut Vec<usize>,
            articulations: &mut Vec<usize>,
            points: &mut Vec<Vec3>,
        ) {
            match p {
                ResolvedPredicate::DistanceBelow(a, b, _)
                | ResolvedPredicate::OrientationWithin(a, b, _) => {
                    collect_observed(a, bodies, articulations, points);
                    collect_observed(b, bodies, articulations, points);
                }
                ResolvedPredicate::HeightAbove(a, _) => {
                    collect_observed(a, bodies, articulations, points)
                }
                ResolvedPredicate::QposBeyond(i, _) => articulations.push(*i),
                ResolvedPredicate::AllOf(preds) => {
                    for p in preds {
                        observe_predicate(p, bodies, articulations, points);
                    }
                }
            }
        }
        observe_predicate(&resolved, &mut bodies, &mut articulations, &mut points);
        success.push(resolved);
    }

    let mut fail = Vec::new();
    for f in &spec.eval.fail {
        fail.push(match f {
            FailPredicate::DroppedBelowZ { object, z } => {
                let i = world
                    .body_index(object)
                    .ok_or_else(|| LearnError::UnresolvedReference(object.clone()))?;
                bodies.push(i);
                ResolvedFail::DroppedBelowZ(i, *z)
            }
            FailPredicate::OutOfWorkspace { object, radius } => {
                let i = world
                    .body_index(object)
                    .ok_or_else(|| LearnError::UnresolvedReference(object.clone()))?;
                bodies.push(i);
                ResolvedFail::OutOfWorkspace(i, *radius)
            }
        });
    }

    bodies.sort_unstable();
    bodies.dedup();
    articulations.sort_unstable();
    articulations.dedup();
    // Literal points dedup by exact value, preserving first-seen order.
    let mut seen = std::collections::BTreeSet::new();
    points.retain(|p| seen.insert([p.x().to_bits(), p.y().to_bits(), p.z().to_bits()]));

    Ok(ResolvedSpec {
        terms,
        success,
        fail,
        timeout_is_failure: spec.eval.timeout_is_failure,
        observed_bodies: bodies,
        observed_articulations: articulations,
        observed_points: points,
    })
}

fn ref_position(r: &ResolvedRef, world: &WorldState, env: usize) -> Vec3 {
    let state = &world.envs[env];
    match r {
        ResolvedRef::Body(i) => state.bodies[*i].pose.p,
        ResolvedRef::Palm => state.robot.palm.p,
        ResolvedRef::Tip(i) => state.robot.tips[*i].p,
        ResolvedRef::Handle(i) => state.articulations[*i].handle_world(),
        ResolvedRef::Qpos(i) => Vec3::new(state.articulations[*i].qpos, 0.0, 0.0),
        ResolvedRef::OpenTarget(i) => Vec3::new(state.articulations[*i].open_target, 0.0, 0.0),
        ResolvedRef::CloseTarget(i) => Vec3::new(state.articulations[*i].close_target, 0.0, 0.0),
        ResolvedRef::Point(p) => *p,
        ResolvedRef::Pose(p, _) => *p,
        ResolvedRef::Scalar(v) => Vec3::new(*v, 0.0, 0.0),
    }
}

fn ref_orientation(r: &ResolvedRef, world: &WorldState, env: usize) -> Quat {
    let state = &world.envs[env];
    match r {
        ResolvedRef::Body(i) => state.bodies[*i].pose.q,
        ResolvedRef::Palm => state.robot.palm.q,
        ResolvedRef::Tip(i) => state.robot.tips[*i].q,
        ResolvedRef::Pose(_, q) => *q,
        _ => Quat::IDENTITY,
    }
}

fn ref_scalar(r: &ResolvedRef, world: &WorldState, env: usize) -> f64 {
    let state = &world.envs[env];
    match r {
        ResolvedRef::Scalar(v) => *v,
        ResolvedRef::Qpos(i) => state.articulations[*i].qpos,
        ResolvedRef::OpenTarget(i) => state.articulations[*i].open_target,
        ResolvedRef::CloseTarget(i) => state.articulations[*i].close_target,
        ResolvedRef::Point(p) | ResolvedRef::Pose(p, _) => p.z(),
        other => ref_position(other, world, env).z(),
    }
}

/// Paper-convention orientation error between two unit quaternions.
pub fn orientation_angle(a: &Quat, b: &Quat) -> f64 {
    let dot = a.dot(b).abs().clamp(1e-8, 1.0 - 1e-8);
    2.0 * dot.acos()
}

fn predicate_holds(p: &ResolvedPredicate, world: &WorldState, env: usize) -> bool {
    match p {
        ResolvedPredicate::DistanceBelow(a, b, threshold) => {
            ref_position(a, world, env).dist(&ref_position(b, world, env)) < *threshold
        }
        ResolvedPredicate::QposBeyond(i, fraction) => {
            let art = &world.envs[env].articulations[*i];
            let span = art.open_target - art.close_target;
            if span.abs() < 1e-12 {
                return false;
            }
            (art.qpos - art.close_target) / span >= *fraction
        }
        ResolvedPredicate::HeightAbove(subject, z) => ref_position(subject, world, env).z() > *z,
        ResolvedPredicate::OrientationWithin(a, b, angle) => {
            orientation_angle(
                &ref_orientation(a, world, env),
                &ref_orientation(b, world, env),
            ) < *angle
        }
        ResolvedPredicate::AllOf(preds) => preds.iter().all(|p| predicate_holds(p, world, env)),
    }
}

/// Per-env reward: sum of weighted, shaped, optionally gated terms.
/// `actions` is the flat (num_envs x act_dim) batch fed to the control step.
pub fn compute_reward(
    world: &WorldState,
    actions: &[f64],
    act_dim: usize,
    spec: &ResolvedSpec,
) -> Result<Vec<f64>, LearnError> {
    let n = world.num_envs();
    let mut rewards = vec![0.0; n];
    for env in 0..n {
        let action = &actions[env * act_dim..(env + 1) * act_dim];
        let mut total = 0.0;
        for term in &spec.terms {
            if let Some(gate) = &term.gate {
                if !predicate_holds(gate, world, env) {
                    continue;
                }
            }
            let value = match term.kind {
                TermKind::Distance => {
                    let s = term.subject.as_ref().unwrap();
                    let t = term.target.as_ref().unwrap();
                    ref_position(s, world, env).dist(&ref_position(t, world, env))
                }
                TermKind::Orientation => {
                    let s = term.subject.as_ref().unwrap();
                    let t = term.target.as_ref().unwrap();
                    orientation_angle(
                        &ref_orientation(s, world, env),
                        &ref_orientation(t, world, env),
                    )
                }
                TermKind::Contact => {
                    let ResolvedRef::Body(body) = term.subject.as_ref().unwrap() else {
                        unreachable!("validated at resolve time");
                    };
                    let forces = contact_forces(world, env, *body)
                        .map_err(|e| LearnError::Sim(e.to_string()))?;
                    forces.iter().sum::<f64>() / 6.0
                }
                TermKind::JointTarget => {
                    let s = term.subject.as_ref().unwrap();
                    let t = term.target.as_ref().unwrap();
                    (ref_scalar(s, world, env) - ref_scalar(t, world, env)).abs()
                }
                TermKind::ActionPenalty => action.iter().map(|a| a * a).sum::<f64>(),
                TermKind::LiftHeight => {
                    let s = term.subject.as_ref().unwrap();
                    let t = term.target.as_ref().unwrap();
                    (ref_scalar(t, world, env) - ref_position(s, world, env).z()).max(0.0)
                }
            };
            total += term.weight * term.shaping.apply(value);
        }
        if !total.is_finite() {
            return Err(LearnError::NonFiniteReward(env));
        }
        rewards[env] = total;
    }
    Ok(rewards)
}

/// Success/fail per env with exclusivity enforced by construction:
/// success = (all success predicates) and not (any fail predicate).
pub fn evaluate(world: &WorldState, spec: &ResolvedSpec) -> StageOutcome {
    let n = world.num_envs();
    let mut success = vec![false; n];
    let mut fail = vec![false; n];
    for env in 0..n {
        let any_fail = spec.fail.iter().any(|f| match f {
            ResolvedFail::DroppedBelowZ(i, z) => world.envs[env].bodies[*i].pose.p.z() < *z,
            ResolvedFail::OutOfWorkspace(i, radius) => {
                let rel = world.envs[env].bodies[*i].pose.p - world.base_pose.p;
                rel.norm_xy() > *radius
            }
        });
        let all_success = spec
            .success
            .iter()
            .all(|p| predicate_holds(p, world, env));
        fail[env] = any_fail;
        success[env] = all_success && !any_fail;
    }
    StageOutcome { success, fail }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dexgen_core::math::Vec3 as V;
    use dexgen_sim::testutil::{builtin_catalog, single_object_scene};
    use dexgen_sim::world::{reset, ResetOptions};

    fn world_with_apple() -> WorldState {
        reset(
            &single_object_scene("apple", "apple", V::new(0.1, 0.0, 0.8), 1.0),
            &builtin_catalog(),
            &ResetOptions {
                num_envs: 2,
                seed: 0,
                pos_jitter: 0.0,
                yaw_jitter: 0.0,
                episode_limit: 200,
                allow_unclean: false,
            },
        )
        .unwrap()
    }

    fn simple_spec() -> StageLearnSpec {
        StageLearnSpec {
            reward: RewardSpec {
                terms: vec![RewardTerm {
                    kind: TermKind::Distance,
                    weight: 1.0,
                    subject: Some(Ref::Palm),
                    target: Some(Ref::Object {
                        name: "apple".into(),
                    }),
                    shaping: Shaping::NegL2,
                    gate: None,
                }],
            },
            eval: EvalSpec {
                success: vec![Predicate::DistanceBelow {
                    subject: Ref::Palm,
                    target: Ref::Object {
                        name: "apple".into(),
                    },
                    threshold: 0.05,
                }],
                fail: vec![FailPredicate::DroppedBelowZ {
                    object: "apple".into(),
                    z: 0.66,
                }],
                timeout_is_failure: false,
            },
        }
    }

    #[test]
    fn zero_distance_term_values() {
        let world = world_with_apple();
        // Palm at the apple: use a distance term subject=target.
        let spec = StageLearnSpec {
            reward: RewardSpec {
                terms: vec![
                    RewardTerm {
                        kind: TermKind::Distance,
                        weight: 1.0,
                        subject: Some(Ref::Object { name: "apple".into() }),
                        target: Some(Ref::Object { name: "apple".into() }),
                        shaping: Shaping::NegL2,
                        gate: None,
                    },
                    RewardTerm {
                        kind: TermKind::Distance,
                        weight: 2.0,
                        subject: Some(Ref::Object { name: "apple".into() }),
                        target: Some(Ref::Object { name: "apple".into() }),
                        shaping: Shaping::ExpDecay { scale: 0.3 },
                        gate: None,
                    },
                ],
            },
            eval: simple_spec().eval,
        };
        let resolved = resolve_spec(&spec, &world).unwrap();
        let rewards = compute_reward(&world, &[0.0; 12], 6, &resolved).unwrap();
        // neg_l2 at zero distance = 0; exp_decay at zero = 1.0 * weight.
        assert!((rewards[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn orientation_of_identical_quaternions_is_zero() {
        let q = Quat::from_yaw(0.7);
        assert!(orientation_angle(&q, &q) < 1e-3);
        // Sign-flipped quaternion is the same rotation.
        let neg = Quat::new(-q.0[0], -q.0[1], -q.0[2], -q.0[3]);
        assert!(orientation_angle(&q, &neg) < 1e-3);
    }

    #[test]
    fn two_term_reward_matches_hand_sum() {
        let world = world_with_apple();
        let spec = StageLearnSpec {
            reward: RewardSpec {
                terms: vec![
                    RewardTerm {
                        kind: TermKind::Distance,
                        weight: 1.5,
                        subject: Some(Ref::Palm),
                        target: Some(Ref::Object { name: "apple".into() }),
                        shaping: Shaping::ExpDecay { scale: 0.25 },
                        gate: None,
                    },
                    RewardTerm {
                        kind: TermKind::ActionPenalty,
                        weight: 0.01,
                        subject: None,
                        target: None,
                        shaping: Shaping::NegL2,
                        gate: None,
                    },
                ],
            },
            eval: simple_spec().eval,
        };
        let resolved = resolve_spec(&spec, &world).unwrap();
        let actions = vec![0.1, -0.2, 0.3, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0];
        let rewards = compute_reward(&world, &actions, 6, &resolved).unwrap();

        let palm = world.envs[0].robot.palm.p;
        let apple = world.envs[0].bodies[0].pose.p;
        let dist = palm.dist(&apple);
        let a2: f64 = actions[..6].iter().map(|a| a * a).sum();
        let expected = 1.5 * (-dist / 0.25).exp() + 0.01 * (-a2);
        assert!((rewards[0] - expected).abs() < 1e-12, "{} vs {expected}", rewards[0]);
    }

    #[test]
    fn unresolved_reference_fails_at_validation() {
        let world = world_with_apple();
        let mut spec = simple_spec();
        spec.reward.terms[0].target = Some(Ref::Object {
            name: "unicorn".into(),
        });
        assert!(matches!(
            resolve_spec(&spec, &world),
            Err(LearnError::UnresolvedReference(_))
        ));
    }

    #[test]
    fn evaluate_vacuous_state_is_neither() {
        let world = world_with_apple();
        let resolved = resolve_spec(&simple_spec(), &world).unwrap();
        let outcome = evaluate(&world, &resolved);
        assert!(!outcome.success[0]);
        assert!(!outcome.fail[0]);
    }

    #[test]
    fn fail_overrides_success() {
        let mut world = world_with_apple();
        // Drop the apple below the fail plane while forcing the distance
        // predicate true.
        let palm = world.envs[0].robot.palm.p;
        world.envs[0].bodies[0].pose.p = V::new(palm.x(), palm.y(), 0.5);
        let spec = StageLearnSpec {
            eval: EvalSpec {
                success: vec![Predicate::DistanceBelow {
                    subject: Ref::Palm,
                    target: Ref::Object { name: "apple".into() },
                    threshold: 10.0,
                }],
                fail: vec![FailPredicate::DroppedBelowZ {
                    object: "apple".into(),
                    z: 0.66,
                }],
                timeout_is_failure: false,
            },
            reward: simple_spec().reward,
        };
        let resolved = resolve_spec(&spec, &world).unwrap();
        let outcome = evaluate(&world, &resolved);
        assert!(outcome.fail[0]);
        assert!(!outcome.success[0], "exclusivity must force success false");
    }

    #[test]
    fn success_when_within_threshold() {
        let mut world = world_with_apple();
        let palm = world.envs[0].robot.palm.p;
        world.envs[0].bodies[0].pose.p = palm + V::new(0.02, 0.0, 0.0);
        let resolved = resolve_spec(&simple_spec(), &world).unwrap();
        let outcome = evaluate(&world, &resolved);
        assert!(outcome.success[0]);
        assert!(!outcome.fail[0]);
        // Env 1 unchanged: not successful.
        assert!(!outcome.success[1]);
    }

    #[test]
    fn gated_term_contributes_zero_when_gate_false() {
        let world = world_with_apple();
        let gated = StageLearnSpec {
            reward: RewardSpec {
                terms: vec![
                    RewardTerm {
                        kind: TermKind::Distance,
                        weight: 1.0,
                        subject: Some(Ref::Palm),
                        target: Some(Ref::Object { name: "apple".into() }),
                        shaping: Shaping::NegL2,
                        // Gate that is false at reset.
                        gate: Some(Predicate::HeightAbove {
                            subject: Ref::Object { name: "apple".into() },
                            z: 5.0,
                        }),
                    },
                    RewardTerm {
                        kind: TermKind::Distance,
                        weight: 0.0,
                        subject: Some(Ref::Palm),
                        target: Some(Ref::Object { name: "apple".into() }),
                        shaping: Shaping::NegL2,
                        gate: None,
                    },
                ],
            },
            eval: simple_spec().eval,
        };
        let resolved = resolve_spec(&gated, &world).unwrap();
        let rewards = compute_reward(&world, &[0.0; 12], 6, &resolved).unwrap();
        assert_eq!(rewards[0], 0.0);
    }

    #[test]
    fn spec_documents_round_trip() {
        let spec = simple_spec();
        let json = spec.to_json();
        let again = StageLearnSpec::from_json(&json).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn penalty_only_reward_rejected() {
        let world = world_with_apple();
        let spec = StageLearnSpec {
            reward: RewardSpec {
                terms: vec![RewardTerm {
                    kind: TermKind::ActionPenalty,
                    weight: 1.0,
                    subject: None,
                    target: None,
                    shaping: Shaping::NegL2,
                    gate: None,
                }],
            },
            eval: simple_spec().eval,
        };
        assert!(resolve_spec(&spec, &world).is_err());
    }
}
