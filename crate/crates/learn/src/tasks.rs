//! Built-in fixture tasks: a single-stage reach task and a three-stage
//! pick task (approach via planner, grasp, lift). These double as the
//! on-disk task-directory format.

use std::path::Path;

use dexgen_core::math::{Quat, Vec3};
use dexgen_core::scenegen::{
    parse_config, serialize_config, ControlJoint, Method, Pose, SceneConfig, SceneObject,
    StageSpec, TableSpec,
};

use crate::spec::{
    EvalSpec, FailPredicate, Predicate, Ref, RewardSpec, RewardTerm, Shaping, StageLearnSpec,
    TermKind,
};
use crate::LearnError;

/// Palm offset from a graspable object's grasp point: slightly behind and
/// above so the curled fingers land on the object.
pub const PRE_GRASP_OFFSET: [f64; 3] = [-0.055, 0.0, 0.11];

/// A loadable task: scene plus one learn spec per stage.
#[derive(Debug, Clone)]
pub struct TaskBundle {
    pub name: String,
    pub config: SceneConfig,
    pub specs: Vec<StageLearnSpec>,
}

impl TaskBundle {
    pub fn stages(&self) -> &[StageSpec] {
        &self.config.stages
    }
}

fn point(p: Vec3) -> Ref {
    Ref::Point { p: p.0 }
}

fn distance_term(subject: Ref, target: Ref, weight: f64, scale: f64) -> RewardTerm {
    RewardTerm {
        kind: TermKind::Distance,
        weight,
        subject: Some(subject),
        target: Some(target),
        shaping: Shaping::ExpDecay { scale },
        gate: None,
    }
}

fn action_penalty(weight: f64) -> RewardTerm {
    RewardTerm {
        kind: TermKind::ActionPenalty,
        weight,
        subject: None,
        target: None,
        shaping: Shaping::NegL2,
        gate: None,
    }
}

/// Terminal bonus: a constant-valued term gated on the stage's success
/// predicate, so finishing beats hovering just outside the threshold.
fn success_bonus(weight: f64, gate: Predicate) -> RewardTerm {
    RewardTerm {
        kind: TermKind::Distance,
        weight,
        subject: Some(Ref::Palm),
        target: Some(Ref::Palm),
        shaping: Shaping::ExpDecay { scale: 1.0 },
        gate: Some(gate),
    }
}

/// Reach task: drive the palm to a fixed point with the arm mask.
pub fn reach_task() -> TaskBundle {
    let goal = Vec3::new(0.15, 0.25, 0.95);
    let config = SceneConfig {
        robot_base: Pose {
            p: Vec3::new(-0.5, 0.0, 0.0),
            q: Quat::IDENTITY,
        },
        table: TableSpec {
            length: dexgen_core::scenegen::TABLE_LENGTH,
            width: dexgen_core::scenegen::TABLE_WIDTH,
            height: dexgen_core::scenegen::DEFAULT_TABLE_HEIGHT,
        },
        objects: vec![],
        stages: vec![StageSpec {
            instruction: "reach the goal point".into(),
            method: Method::Rl,
            control_joint: Some(ControlJoint::Arm),
        }],
        instruction: "move the palm to the goal point".into(),
        background: "workshop".into(),
    };
    let success = Predicate::DistanceBelow {
        subject: Ref::Palm,
        target: point(goal),
        threshold: 0.05,
    };
    let spec = StageLearnSpec {
        reward: RewardSpec {
            terms: vec![
                distance_term(Ref::Palm, point(goal), 1.0, 0.25),
                RewardTerm {
                    kind: TermKind::Distance,
                    weight: 0.2,
                    subject: Some(Ref::Palm),
                    target: Some(point(goal)),
                    shaping: Shaping::NegL2,
                    gate: None,
                },
                success_bonus(800.0, success.clone()),
                action_penalty(0.001),
            ],
        },
        eval: EvalSpec {
            success: vec![success],
            fail: vec![],
            timeout_is_failure: false,
        },
    };
    TaskBundle {
        name: "reach".into(),
        config,
        specs: vec![spec],
    }
}

/// Pick task: planner approach to a pre-grasp pose, grasp with a small
/// proving lift, then raise the bottle clear of the table.
pub fn pick_task() -> TaskBundle {
    let base = Vec3::new(-0.5, 0.0, 0.0);
    let bottle_p = Vec3::new(0.12, 0.28, 0.88);
    // Approach frame: yawed toward the bottle so the planner goal and the
    // grasp geometry stay consistent with the arm's pan joint.
    let yaw = (bottle_p.y() - base.y()).atan2(bottle_p.x() - base.x());
    let offset_local = Vec3::new(PRE_GRASP_OFFSET[0], PRE_GRASP_OFFSET[1], PRE_GRASP_OFFSET[2] + 0.09);
    let pre_grasp = bottle_p + Quat::from_yaw(yaw).rotate(&offset_local);
    let bottle = Ref::Object {
        name: "bottle".into(),
    };

    let config = SceneConfig {
        robot_base: Pose {
            p: Vec3::new(-0.5, 0.0, 0.0),
            q: Quat::IDENTITY,
        },
        table: TableSpec {
            length: dexgen_core::scenegen::TABLE_LENGTH,
            width: dexgen_core::scenegen::TABLE_WIDTH,
            height: dexgen_core::scenegen::DEFAULT_TABLE_HEIGHT,
        },
        objects: vec![
            SceneObject {
                name: "bottle".into(),
                asset_id: "bottle".into(),
                pose: Pose {
                    p: bottle_p,
                    q: Quat::IDENTITY,
                },
                scale: 1.0,
                is_static: false,
                init_qpos: None,
            },
            SceneObject {
                name: "bowl".into(),
                asset_id: "bowl".into(),
                pose: Pose {
                    p: Vec3::new(0.1, -0.25, 0.79),
                    q: Quat::IDENTITY,
                },
                scale: 1.0,
                is_static: false,
                init_qpos: None,
            },
        ],
        stages: vec![
            StageSpec {
                instruction: "approach the bottle".into(),
                method: Method::MotionPlanning,
                control_joint: None,
            },
            StageSpec {
                instruction: "grasp the bottle".into(),
                method: Method::Rl,
                control_joint: Some(ControlJoint::LiftInspire),
            },
            StageSpec {
                instruction: "lift the bottle".into(),
                method: Method::Rl,
                control_joint: Some(ControlJoint::LiftInspire),
            },
        ],
        instruction: "grasp the bottle and lift it off the table".into(),
        background: "kitchen".into(),
    };

    // The grasp stage can only curl fingers and arc the wrist, so the
    // approach must deliver both the pre-grasp position and the yawed palm
    // orientation.
    let approach_pose = Ref::PoseLit {
        p: pre_grasp.0,
        q: Quat::from_yaw(yaw).0,
    };
    let position_ok = Predicate::DistanceBelow {
        subject: Ref::Palm,
        target: point(pre_grasp),
        threshold: 0.05,
    };
    let orientation_ok = Predicate::OrientationWithin {
        subject: Ref::Palm,
        target: approach_pose.clone(),
        angle: 0.35,
    };
    let approach_success = Predicate::AllOf {
        preds: vec![position_ok.clone(), orientation_ok.clone()],
    };
    let approach = StageLearnSpec {
        reward: RewardSpec {
            terms: vec![
                distance_term(Ref::Palm, point(pre_grasp), 1.0, 0.25),
                RewardTerm {
                    kind: TermKind::Orientation,
                    weight: 0.5,
                    subject: Some(Ref::Palm),
                    target: Some(approach_pose),
                    shaping: Shaping::ExpDecay { scale: 0.5 },
                    gate: None,
                },
                success_bonus(800.0, approach_success.clone()),
                action_penalty(0.001),
            ],
        },
        eval: EvalSpec {
            success: vec![position_ok, orientation_ok],
            fail: vec![],
            timeout_is_failure: false,
        },
    };

    let drop_fail = vec![
        FailPredicate::DroppedBelowZ {
            object: "bottle".into(),
            z: 0.5,
        },
        FailPredicate::OutOfWorkspace {
            object: "bottle".into(),
            radius: 1.2,
        },
    ];

    let grasp = StageLearnSpec {
        reward: RewardSpec {
            terms: vec![
                // Reward finger-group force on the bottle.
                RewardTerm {
                    kind: TermKind::Contact,
                    weight: -0.05,
                    subject: Some(bottle.clone()),
                    target: None,
                    shaping: Shaping::NegL2,
                    gate: None,
                },
                // Shortfall to the proving-lift height.
                RewardTerm {
                    kind: TermKind::LiftHeight,
                    weight: 1.0,
                    subject: Some(bottle.clone()),
                    target: Some(Ref::Scalar { value: 0.93 }),
                    shaping: Shaping::NegL2,
                    gate: None,
                },
                RewardTerm {
                    kind: TermKind::LiftHeight,
                    weight: 1.0,
                    subject: Some(bottle.clone()),
                    target: Some(Ref::Scalar { value: 0.93 }),
                    shaping: Shaping::ExpDecay { scale: 0.05 },
                    gate: None,
                },
                success_bonus(
                    800.0,
                    Predicate::HeightAbove {
                        subject: bottle.clone(),
                        z: 0.91,
                    },
                ),
                action_penalty(0.0005),
            ],
        },
        eval: EvalSpec {
            success: vec![Predicate::HeightAbove {
                subject: bottle.clone(),
                z: 0.91,
            }],
            fail: drop_fail.clone(),
            timeout_is_failure: false,
        },
    };

    let lift = StageLearnSpec {
        reward: RewardSpec {
            terms: vec![
                RewardTerm {
                    kind: TermKind::LiftHeight,
                    weight: 2.0,
                    subject: Some(bottle.clone()),
                    target: Some(Ref::Scalar { value: 1.01 }),
                    shaping: Shaping::NegL2,
                    gate: None,
                },
                RewardTerm {
                    kind: TermKind::LiftHeight,
                    weight: 1.0,
                    subject: Some(bottle.clone()),
                    target: Some(Ref::Scalar { value: 1.01 }),
                    shaping: Shaping::ExpDecay { scale: 0.05 },
                    gate: None,
                },
                RewardTerm {
                    kind: TermKind::Contact,
                    weight: -0.02,
                    subject: Some(bottle.clone()),
                    target: None,
                    shaping: Shaping::NegL2,
                    gate: None,
                },
                success_bonus(
                    800.0,
                    Predicate::HeightAbove {
                        subject: bottle.clone(),
                        z: 0.98,
                    },
                ),
                action_penalty(0.0005),
            ],
        },
        eval: EvalSpec {
            success: vec![Predicate::HeightAbove {
                subject: bottle,
                z: 0.98,
            }],
            fail: drop_fail,
            timeout_is_failure: false,
        },
    };

    TaskBundle {
        name: "pick".into(),
        config,
        specs: vec![approach, grasp, lift],
    }
}

pub fn builtin_task(name: &str) -> Option<TaskBundle> {
    match name {
        "reach" => Some(reach_task()),
        "pick" => Some(pick_task()),
        _ => None,
    }
}

/// Write a task directory: `task.yaml` plus `stages/stage_NN.json`.
pub fn write_task(dir: &Path, task: &TaskBundle) -> Result<(), LearnError> {
    let io = |e: std::io::Error| LearnError::SpecParse(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir.join("stages")).map_err(io)?;
    std::fs::write(dir.join("task.yaml"), serialize_config(&task.config)).map_err(io)?;
    for (i, spec) in task.specs.iter().enumerate() {
        std::fs::write(
            dir.join(format!("stages/stage_{i:02}.json")),
            spec.to_json() + "\n",
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Load a task directory written by `write_task`.
pub fn load_task(dir: &Path) -> Result<TaskBundle, LearnError> {
    let io = |e: std::io::Error| LearnError::SpecParse(format!("{}: {e}", dir.display()));
    let text = std::fs::read_to_string(dir.join("task.yaml")).map_err(io)?;
    let config = parse_config(&text).map_err(|e| LearnError::SpecParse(e.to_string()))?;
    let mut specs = Vec::new();
    for i in 0..config.stages.len() {
        let path = dir.join(format!("stages/stage_{i:02}.json"));
        let text = std::fs::read_to_string(&path)
            .map_err(|e| LearnError::SpecParse(format!("{}: {e}", path.display())))?;
        specs.push(StageLearnSpec::from_json(&text)?);
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "task".into());
    Ok(TaskBundle {
        name,
        config,
        specs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dexgen_core::catalog::Catalog;
    use dexgen_core::scenegen::lint::{error_count, lint_scene};

    #[test]
    fn builtin_tasks_are_lint_clean() {
        let catalog = Catalog::builtin();
        for task in [reach_task(), pick_task()] {
            let findings = lint_scene(&task.config, &catalog).unwrap();
            assert_eq!(
                error_count(&findings),
                0,
                "{}: {findings:?}",
                task.name
            );
            assert_eq!(task.specs.len(), task.config.stages.len());
        }
    }

    #[test]
    fn task_directories_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        for task in [reach_task(), pick_task()] {
            let dir = tmp.path().join(&task.name);
            write_task(&dir, &task).unwrap();
            let loaded = load_task(&dir).unwrap();
            assert_eq!(loaded.config, task.config);
            assert_eq!(loaded.specs, task.specs);
        }
    }

    #[test]
    fn shipped_task_assets_match_builtin_definitions() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/tasks");
        for task in [reach_task(), pick_task()] {
            let dir = root.join(&task.name);
            let loaded = load_task(&dir)
                .unwrap_or_else(|e| panic!("shipped task {} unreadable: {e}", task.name));
            assert_eq!(loaded.config, task.config, "{} task.yaml drifted", task.name);
            assert_eq!(loaded.specs, task.specs, "{} specs drifted", task.name);
        }
    }
}
