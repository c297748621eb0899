//! Geometric lint over scene configurations.
//!
//! Every placement rule the generation prompts state is encoded here as a
//! deterministic check over scaled bounding boxes (axis-aligned after a
//! yaw-only rotation snap). Findings carry a repair directive whenever a
//! single edit fixes the problem.

use serde::Serialize;

use crate::catalog::{size_deviation, AssetRecord, Catalog};
use crate::math::{Aabb, Vec3};
use crate::refine::{Axis, Directive};

use super::{
    SceneConfig, SceneError, SceneObject, CLEARANCE_FRAGILE, CLEARANCE_LARGE, CLEARANCE_SMALL,
    CONTAINER_TILT_LIMIT_DEG, FLOAT_TOLERANCE, REACH_RADIUS, SCALE_MAX, SCALE_MIN,
    SMALL_EXTENT_LIMIT,
};

/// Repair targets slightly inside the hard limits so a fixed scene does not
/// sit exactly on a boundary.
const REACH_REPAIR_TARGET: f64 = 0.78;
const SEPARATION_MARGIN: f64 = 0.01;
/// Resting contact produces separations within float noise of zero; only
/// deeper overlap counts as penetration.
const PENETRATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LintCode {
    OutOfReach,
    Clearance,
    ScaleBounds,
    SizeDeviation,
    Interpenetration,
    Floating,
    GroundPlacement,
    ContainerOrientation,
    BehindRobot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LintFinding {
    pub code: LintCode,
    pub object: String,
    pub severity: Severity,
    pub detail: String,
    pub suggested: Option<Directive>,
}

/// Scaled box for lint purposes: axis-aligned after snapping yaw to the
/// nearest quarter turn.
fn lint_box(obj: &SceneObject, record: &AssetRecord) -> Aabb {
    let half = record.nominal_dims * (obj.scale * 0.5);
    let yaw = obj.pose.q.yaw();
    let quarter_turns = (yaw / std::f64::consts::FRAC_PI_2).round() as i64;
    let half = if quarter_turns.rem_euclid(2) == 1 {
        Vec3::new(half.y(), half.x(), half.z())
    } else {
        half
    };
    Aabb::from_center_half(obj.pose.p, half)
}

fn clearance_class(obj: &SceneObject, record: &AssetRecord) -> f64 {
    if record.has_tag("fragile") {
        return CLEARANCE_FRAGILE;
    }
    let max_extent = record.nominal_dims.0.iter().fold(0.0_f64, |a, b| a.max(*b)) * obj.scale;
    if max_extent < SMALL_EXTENT_LIMIT {
        CLEARANCE_SMALL
    } else {
        CLEARANCE_LARGE
    }
}

/// Highest support surface under the object's center: ground, the table top
/// when over its footprint, or another object's top face.
fn support_height(
    obj: &SceneObject,
    boxes: &[(String, Aabb)],
    config: &SceneConfig,
    own_bottom: f64,
) -> f64 {
    let mut support = 0.0_f64;
    let slab = config.table.slab();
    if slab.contains_xy(&obj.pose.p) {
        support = support.max(config.table.height);
    }
    for (name, other) in boxes {
        if *name == obj.name {
            continue;
        }
        if other.contains_xy(&obj.pose.p) && other.max.z() <= own_bottom + FLOAT_TOLERANCE {
            support = support.max(other.max.z());
        }
    }
    support
}

/// One-axis translation that separates `own` from `other`, preferring the
/// axis needing the smallest move.
fn push_out_directive(name: &str, own: &Aabb, other: &Aabb, axes: &[Axis]) -> Option<Directive> {
    let sep = own.axis_separation(other);
    let mut best: Option<(f64, Axis, f64)> = None;
    for axis in axes {
        let idx = axis.index();
        if sep[idx] >= 0.0 {
            continue;
        }
        let own_c = (own.min[idx] + own.max[idx]) * 0.5;
        let other_c = (other.min[idx] + other.max[idx]) * 0.5;
        let dir = if own_c >= other_c { 1.0 } else { -1.0 };
        let delta = dir * (-sep[idx] + SEPARATION_MARGIN);
        if best.map(|(d, _, _)| delta.abs() < d).unwrap_or(true) {
            best = Some((delta.abs(), *axis, delta));
        }
    }
    best.map(|(_, axis, delta)| Directive::Move {
        object: name.to_string(),
        axis,
        delta,
    })
}

/// Run every placement check; findings are ordered by (object, code).
pub fn lint_scene(config: &SceneConfig, catalog: &Catalog) -> Result<Vec<LintFinding>, SceneError> {
    config.validate_with_catalog(catalog)?;

    let mut objects: Vec<&SceneObject> = config.objects.iter().collect();
    objects.sort_by(|a, b| a.name.cmp(&b.name));

    let boxes: Vec<(String, Aabb)> = objects
        .iter()
        .map(|o| {
            let record = catalog.get(&o.asset_id).expect("resolved above");
            (o.name.clone(), lint_box(o, record))
        })
        .collect();
    let box_of = |name: &str| -> &Aabb {
        &boxes
            .iter()
            .find(|(n, _)| n == name)
            .expect("object present")
            .1
    };

    let mut findings: Vec<LintFinding> = Vec::new();
    let base = config.robot_base.p;
    let slab = config.table.slab();

    for obj in &objects {
        let record = catalog.get(&obj.asset_id).expect("resolved above");
        let own = box_of(&obj.name);

        // OUT_OF_REACH
        if !obj.is_static {
            let rel = obj.pose.p - base;
            let dist = rel.norm_xy();
            if dist > REACH_RADIUS {
                let suggested = {
                    let (major, minor) = if rel.x().abs() >= rel.y().abs() {
                        (Axis::X, rel.y())
                    } else {
                        (Axis::Y, rel.x())
                    };
                    if minor.abs() <= REACH_REPAIR_TARGET {
                        let major_now = match major {
                            Axis::X => rel.x(),
                            Axis::Y => rel.y(),
                            Axis::Z => unreachable!(),
                        };
                        let target =
                            major_now.signum() * (REACH_REPAIR_TARGET.powi(2) - minor * minor).sqrt();
                        Some(Directive::Move {
                            object: obj.name.clone(),
                            axis: major,
                            delta: target - major_now,
                        })
                    } else {
                        None
                    }
                };
                findings.push(LintFinding {
                    code: LintCode::OutOfReach,
                    object: obj.name.clone(),
                    severity: Severity::Error,
                    detail: format!(
                        "center {:.3} m horizontal from robot base (limit {REACH_RADIUS})",
                        dist
                    ),
                    suggested,
                });
            }
        }

        // SCALE_BOUNDS
        if obj.scale < SCALE_MIN || obj.scale > SCALE_MAX {
            let target = obj.scale.clamp(SCALE_MIN, SCALE_MAX);
            findings.push(LintFinding {
                code: LintCode::ScaleBounds,
                object: obj.name.clone(),
                severity: Severity::Error,
                detail: format!("scale {} outside [{SCALE_MIN}, {SCALE_MAX}]", obj.scale),
                suggested: Some(Directive::Scale {
                    object: obj.name.clone(),
                    factor: target / obj.scale,
                }),
            });
        }

        // SIZE_DEVIATION
        if let Some(dev) = size_deviation(record, obj.scale, catalog) {
            if dev.flagged {
                let rmax = dev.ratios.0.iter().fold(f64::MIN, |a, b| a.max(*b));
                let rmin = dev.ratios.0.iter().fold(f64::MAX, |a, b| a.min(*b));
                let factor = 1.0 / (rmax * rmin).sqrt();
                findings.push(LintFinding {
                    code: LintCode::SizeDeviation,
                    object: obj.name.clone(),
                    severity: Severity::Error,
                    detail: format!(
                        "size ratios ({:.2}, {:.2}, {:.2}) vs category reference exceed {}x window",
                        dev.ratios.x(),
                        dev.ratios.y(),
                        dev.ratios.z(),
                        dev.tolerance_factor
                    ),
                    suggested: Some(Directive::Scale {
                        object: obj.name.clone(),
                        factor,
                    }),
                });
            }
        }

        // FLOATING (non-static, non-articulated bodies)
        if !obj.is_static && !record.articulated {
            let bottom = own.min.z();
            let support = support_height(obj, &boxes, config, bottom);
            let gap = bottom - support;
            if gap > FLOAT_TOLERANCE {
                findings.push(LintFinding {
                    code: LintCode::Floating,
                    object: obj.name.clone(),
                    severity: Severity::Error,
                    detail: format!("lower face {gap:.3} m above support surface"),
                    suggested: Some(Directive::Move {
                        object: obj.name.clone(),
                        axis: Axis::Z,
                        delta: support - bottom,
                    }),
                });
            }
        }

        // GROUND_PLACEMENT (articulations rest on the ground, off the table)
        if record.articulated {
            let bottom = own.min.z();
            if bottom.abs() > FLOAT_TOLERANCE {
                findings.push(LintFinding {
                    code: LintCode::GroundPlacement,
                    object: obj.name.clone(),
                    severity: Severity::Error,
                    detail: format!("articulation base at z {bottom:.3}, expected ground contact"),
                    suggested: Some(Directive::Move {
                        object: obj.name.clone(),
                        axis: Axis::Z,
                        delta: -bottom,
                    }),
                });
            } else if own.overlaps_xy(&slab) {
                findings.push(LintFinding {
                    code: LintCode::GroundPlacement,
                    object: obj.name.clone(),
                    severity: Severity::Error,
                    detail: "articulation overlaps the table footprint".into(),
                    suggested: push_out_directive(&obj.name, own, &slab, &[Axis::X, Axis::Y]),
                });
            }
        }

        // CONTAINER_ORIENTATION
        if record.has_tag("container") {
            let up = obj.pose.q.rotate(&Vec3::Z);
            let tilt_deg = up.z().clamp(-1.0, 1.0).acos().to_degrees();
            if tilt_deg > CONTAINER_TILT_LIMIT_DEG {
                let restore_axis = up.cross(&Vec3::Z).normalized();
                let suggested = if restore_axis.x().abs() >= 0.95 {
                    Some(Directive::Rotate {
                        object: obj.name.clone(),
                        axis: Axis::X,
                        angle_deg: restore_axis.x().signum() * tilt_deg,
                    })
                } else if restore_axis.y().abs() >= 0.95 {
                    Some(Directive::Rotate {
                        object: obj.name.clone(),
                        axis: Axis::Y,
                        angle_deg: restore_axis.y().signum() * tilt_deg,
                    })
                } else {
                    None
                };
                findings.push(LintFinding {
                    code: LintCode::ContainerOrientation,
                    object: obj.name.clone(),
                    severity: Severity::Error,
                    detail: format!("up-axis tilted {tilt_deg:.1} deg from +Z"),
                    suggested,
                });
            }
        }

        // BEHIND_ROBOT (interactive objects: movable or articulated)
        if (!obj.is_static || record.articulated) && obj.pose.p.x() < base.x() {
            findings.push(LintFinding {
                code: LintCode::BehindRobot,
                object: obj.name.clone(),
                severity: Severity::Error,
                detail: format!(
                    "x {:.3} lies behind the robot base plane x = {:.3}",
                    obj.pose.p.x(),
                    base.x()
                ),
                suggested: Some(Directive::Move {
                    object: obj.name.clone(),
                    axis: Axis::X,
                    delta: base.x() - obj.pose.p.x() + 0.3,
                }),
            });
        }

        // INTERPENETRATION vs the table slab (sunken objects)
        if !record.articulated {
            let sep = own.axis_separation(&slab);
            if sep.iter().all(|s| *s < -PENETRATION_EPS) {
                findings.push(LintFinding {
                    code: LintCode::Interpenetration,
                    object: obj.name.clone(),
                    severity: Severity::Error,
                    detail: "object volume intersects the table".into(),
                    suggested: Some(Directive::Move {
                        object: obj.name.clone(),
                        axis: Axis::Z,
                        delta: config.table.height - own.min.z(),
                    }),
                });
            }
        }
    }

    // Pairwise checks; findings attributed to the later object by name.
    for i in 0..objects.len() {
        for j in (i + 1)..objects.len() {
            let (first, second) = (objects[i], objects[j]);
            let (fa, fb) = (box_of(&first.name), box_of(&second.name));
            let sep = fa.axis_separation(fb);
            if sep.iter().all(|s| *s < -PENETRATION_EPS) {
                // Horizontal push-out only: a vertical move would break the
                // support contact of a resting object.
                findings.push(LintFinding {
                    code: LintCode::Interpenetration,
                    object: second.name.clone(),
                    severity: Severity::Error,
                    detail: format!("overlaps '{}' with positive volume", first.name),
                    suggested: push_out_directive(&second.name, fb, fa, &[Axis::X, Axis::Y]),
                });
                continue;
            }
            // Stacking contact (supported from below) is not a clearance
            // problem.
            let stacked =
                fa.overlaps_xy(fb) && sep[2] >= -PENETRATION_EPS && sep[2] < 2.0 * FLOAT_TOLERANCE;
            if stacked {
                continue;
            }
            let gap = fa.surface_gap(fb);
            let ra = clearance_class(first, catalog.get(&first.asset_id).unwrap());
            let rb = clearance_class(second, catalog.get(&second.asset_id).unwrap());
            let required = ra.max(rb);
            if gap < required {
                findings.push(LintFinding {
                    code: LintCode::Clearance,
                    object: second.name.clone(),
                    severity: Severity::Warn,
                    detail: format!(
                        "surface gap {gap:.3} m to '{}' below required {required:.2} m",
                        first.name
                    ),
                    suggested: None,
                });
            }
        }
    }

    findings.sort_by(|a, b| a.object.cmp(&b.object).then(a.code.cmp(&b.code)));
    Ok(findings)
}

/// Error findings weigh 10, warnings 1.
pub fn lint_score(findings: &[LintFinding]) -> u64 {
    findings
        .iter()
        .map(|f| match f.severity {
            Severity::Error => 10,
            Severity::Warn => 1,
        })
        .sum()
}

pub fn error_count(findings: &[LintFinding]) -> usize {
    findings
        .iter()
        .filter(|f| f.severity == Severity::Error)
        .count()
}

#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub index: usize,
    pub config: SceneConfig,
    pub scores: Vec<u64>,
}

/// Pick the candidate with the lowest lint score; ties go to the earliest.
pub fn select_best(
    candidates: &[SceneConfig],
    catalog: &Catalog,
) -> Result<SelectionOutcome, SceneError> {
    if candidates.is_empty() {
        return Err(SceneError::EmptyCandidates);
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for c in candidates {
        scores.push(lint_score(&lint_scene(c, catalog)?));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(SelectionOutcome {
        index: best,
        config: candidates[best].clone(),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Quat;
    use crate::scenegen::{parse_config, Pose};

    fn catalog() -> Catalog {
        Catalog::builtin()
    }

    fn scene_with(objects: &[SceneObject]) -> SceneConfig {
        SceneConfig {
            robot_base: Pose {
                p: Vec3::new(-0.5, 0.0, 0.0),
                q: Quat::IDENTITY,
            },
            table: super::super::default_table(),
            objects: objects.to_vec(),
            stages: vec![],
            instruction: String::new(),
            background: String::new(),
        }
    }

    fn apple_at(p: Vec3) -> SceneObject {
        SceneObject {
            name: "apple".into(),
            asset_id: "apple".into(),
            pose: Pose {
                p,
                q: Quat::IDENTITY,
            },
            scale: 1.0,
            is_static: false,
            init_qpos: None,
        }
    }

    fn codes(findings: &[LintFinding]) -> Vec<LintCode> {
        findings.iter().map(|f| f.code).collect()
    }

    #[test]
    fn clean_scene_has_no_findings() {
        // Apple resting on the table within reach.
        let scene = scene_with(&[apple_at(Vec3::new(0.1, 0.0, 0.8))]);
        let findings = lint_scene(&scene, &catalog()).unwrap();
        assert!(findings.is_empty(), "{findings:?}");
    }

    #[test]
    fn distant_apple_is_out_of_reach_with_repair() {
        let scene = scene_with(&[apple_at(Vec3::new(0.7, 0.0, 0.8))]);
        let findings = lint_scene(&scene, &catalog()).unwrap();
        assert!(codes(&findings).contains(&LintCode::OutOfReach));
        let f = findings
            .iter()
            .find(|f| f.code == LintCode::OutOfReach)
            .unwrap();
        let d = f.suggested.clone().expect("single-axis repair possible");
        let repaired = crate::refine::apply_directive(&scene, &d).unwrap();
        let rel = repaired.object("apple").unwrap().pose.p - scene.robot_base.p;
        assert!(rel.norm_xy() <= REACH_RADIUS);
    }

    #[test]
    fn over_scaled_microwave_flags_scale_bounds() {
        let mut mw = SceneObject {
            name: "microwave".into(),
            asset_id: "microwave".into(),
            pose: Pose {
                p: Vec3::new(0.9, -1.5, 0.3),
                q: Quat::IDENTITY,
            },
            scale: 2.5,
            is_static: true,
            init_qpos: Some(0.0),
        };
        mw.pose.p = Vec3::new(0.9, -1.5, 0.3 * 2.5);
        let scene = scene_with(&[mw]);
        let findings = lint_scene(&scene, &catalog()).unwrap();
        let sb = findings
            .iter()
            .find(|f| f.code == LintCode::ScaleBounds)
            .expect("scale bounds finding");
        match sb.suggested.as_ref().unwrap() {
            Directive::Scale { factor, .. } => assert!((factor - 0.8).abs() < 1e-12),
            other => panic!("unexpected suggestion {other:?}"),
        }
    }

    #[test]
    fn floating_apple_detected_and_repaired() {
        let scene = scene_with(&[apple_at(Vec3::new(0.1, 0.0, 0.9))]);
        let findings = lint_scene(&scene, &catalog()).unwrap();
        let f = findings
            .iter()
            .find(|f| f.code == LintCode::Floating)
            .expect("floating finding");
        let repaired = crate::refine::apply_directive(&scene, f.suggested.as_ref().unwrap()).unwrap();
        let followup = lint_scene(&repaired, &catalog()).unwrap();
        assert!(!codes(&followup).contains(&LintCode::Floating));
    }

    #[test]
    fn behind_robot_detected() {
        let scene = scene_with(&[apple_at(Vec3::new(-0.9, 0.0, 0.8))]);
        let findings = lint_scene(&scene, &catalog()).unwrap();
        assert!(codes(&findings).contains(&LintCode::BehindRobot));
    }

    #[test]
    fn tilted_bowl_flags_container_orientation() {
        let mut bowl = SceneObject {
            name: "bowl".into(),
            asset_id: "bowl".into(),
            pose: Pose {
                p: Vec3::new(0.1, 0.2, 0.79),
                q: Quat::from_axis_angle(Vec3::X, 0.6),
            },
            scale: 1.0,
            is_static: false,
            init_qpos: None,
        };
        bowl.pose.p = Vec3::new(0.1, 0.2, 0.84);
        let scene = scene_with(&[bowl]);
        let findings = lint_scene(&scene, &catalog()).unwrap();
        let f = findings
            .iter()
            .find(|f| f.code == LintCode::ContainerOrientation)
            .expect("orientation finding");
        let repaired = crate::refine::apply_directive(&scene, f.suggested.as_ref().unwrap()).unwrap();
        let up = repaired.object("bowl").unwrap().pose.q.rotate(&Vec3::Z);
        assert!(up.z() > (15.0_f64).to_radians().cos());
    }

    #[test]
    fn interpenetrating_pair_detected() {
        let a = apple_at(Vec3::new(0.1, 0.0, 0.8));
        let mut b = apple_at(Vec3::new(0.12, 0.0, 0.8));
        b.name = "apple2".into();
        let scene = scene_with(&[a, b]);
        let findings = lint_scene(&scene, &catalog()).unwrap();
        assert!(codes(&findings).contains(&LintCode::Interpenetration));
    }

    #[test]
    fn close_pair_is_a_clearance_warning() {
        let a = apple_at(Vec3::new(0.1, 0.0, 0.8));
        let mut b = apple_at(Vec3::new(0.2, 0.0, 0.8));
        b.name = "apple2".into();
        let scene = scene_with(&[a, b]);
        let findings = lint_scene(&scene, &catalog()).unwrap();
        let f = findings
            .iter()
            .find(|f| f.code == LintCode::Clearance)
            .expect("clearance warning");
        assert_eq!(f.severity, Severity::Warn);
    }

    #[test]
    fn lint_is_pure() {
        let scene = scene_with(&[apple_at(Vec3::new(0.7, 0.4, 1.1))]);
        let a = lint_scene(&scene, &catalog()).unwrap();
        let b = lint_scene(&scene, &catalog()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn horizontal_translation_leaves_relative_findings_invariant() {
        let mut scene = scene_with(&[
            apple_at(Vec3::new(0.7, 0.3, 0.8)),
            {
                let mut b = apple_at(Vec3::new(0.74, 0.3, 0.8));
                b.name = "apple2".into();
                b
            },
        ]);
        let relative = |findings: &[LintFinding]| {
            findings
                .iter()
                .filter(|f| {
                    matches!(
                        f.code,
                        LintCode::OutOfReach | LintCode::Clearance | LintCode::Interpenetration
                    )
                })
                .map(|f| (f.code, f.object.clone()))
                .collect::<Vec<_>>()
        };
        let before = relative(&lint_scene(&scene, &catalog()).unwrap());
        let offset = Vec3::new(0.35, -0.2, 0.0);
        scene.robot_base.p = scene.robot_base.p + offset;
        for obj in &mut scene.objects {
            obj.pose.p = obj.pose.p + offset;
        }
        let after = relative(&lint_scene(&scene, &catalog()).unwrap());
        assert_eq!(before, after);
    }

    #[test]
    fn select_best_uses_score_and_index_tiebreak() {
        let clean = scene_with(&[apple_at(Vec3::new(0.1, 0.0, 0.8))]);
        let mut dirty = clean.clone();
        dirty.objects[0].pose.p = Vec3::new(0.1, 0.0, 1.4);
        let outcome = select_best(
            &[dirty.clone(), clean.clone(), clean.clone()],
            &catalog(),
        )
        .unwrap();
        assert_eq!(outcome.index, 1);
        assert!(outcome.scores[0] > outcome.scores[1]);
        assert_eq!(outcome.scores[1], outcome.scores[2]);
    }

    #[test]
    fn select_best_rejects_empty() {
        assert!(matches!(
            select_best(&[], &catalog()),
            Err(SceneError::EmptyCandidates)
        ));
    }

    #[test]
    fn scores_match_recomputed_lint_totals() {
        let scene = scene_with(&[apple_at(Vec3::new(0.9, 0.9, 1.2))]);
        let outcome = select_best(&[scene.clone()], &catalog()).unwrap();
        let recomputed = lint_score(&lint_scene(&scene, &catalog()).unwrap());
        assert_eq!(outcome.scores[0], recomputed);
    }

    #[test]
    fn parse_then_lint_canonical_document() {
        let config = parse_config(super::super::tests::minimal_config_yaml()).unwrap();
        let findings = lint_scene(&config, &catalog()).unwrap();
        assert!(findings.is_empty());
    }
}
