//! Seeded scene corpus with constructed defects.
//!
//! Twenty scenes cycle through five defect families so every lint code is
//! exercised; each scene is repairable by the synthetic verifier within the
//! refinement budget. Scene 1 is the laptop/marker-pen arrangement used by
//! the directive-fidelity checks.

use crate::math::{Quat, Vec3};
use crate::scenegen::{Pose, SceneConfig, SceneObject, TableSpec};

pub const CORPUS_SIZE: usize = 20;

fn obj(name: &str, asset: &str, p: Vec3, scale: f64, is_static: bool) -> SceneObject {
    SceneObject {
        name: name.to_string(),
        asset_id: asset.to_string(),
        pose: Pose {
            p,
            q: Quat::IDENTITY,
        },
        scale,
        is_static,
        init_qpos: if asset == "cabinet" || asset == "microwave" || asset == "drawer" {
            Some(0.0)
        } else {
            None
        },
    }
}

fn base_scene(shift: f64) -> SceneConfig {
    SceneConfig {
        robot_base: Pose {
            p: Vec3::new(-0.5, 0.0, 0.0),
            q: Quat::IDENTITY,
        },
        table: TableSpec {
            length: crate::scenegen::TABLE_LENGTH,
            width: crate::scenegen::TABLE_WIDTH,
            height: crate::scenegen::DEFAULT_TABLE_HEIGHT,
        },
        objects: vec![
            obj("apple", "apple", Vec3::new(0.08 + shift, 0.22, 0.8), 1.0, false),
            obj("bowl", "bowl", Vec3::new(0.08 + shift, -0.18, 0.79), 1.0, false),
            // Kept clear of the arm's home envelope so refined scenes are
            // immediately plannable.
            obj(
                "bottle",
                "bottle",
                Vec3::new(0.15 + shift, -0.4, 0.88),
                1.0,
                false,
            ),
            obj("cabinet", "cabinet", Vec3::new(0.1, -1.0, 0.55), 1.0, true),
        ],
        stages: vec![],
        instruction: "tidy the tabletop".to_string(),
        background: "kitchen".to_string(),
    }
}

/// Deterministic corpus scene by index (0..20).
pub fn corpus_scene(index: usize) -> SceneConfig {
    assert!(index < CORPUS_SIZE, "corpus has {CORPUS_SIZE} scenes");
    let shift = 0.01 * (index / 5) as f64;
    let mut scene = base_scene(shift);
    match index % 5 {
        0 => {
            // Over-scaled microwave off the table plus a hovering apple.
            scene.objects.push(obj(
                "microwave",
                "microwave",
                Vec3::new(1.2, -1.5, 0.75),
                2.5,
                true,
            ));
            scene.object_mut("apple").unwrap().pose.p[2] = 0.9;
        }
        1 => {
            // Double-size laptop with a marker pen buried inside it.
            scene.objects.push(obj(
                "laptop",
                "laptop",
                Vec3::new(0.1, 0.25, 0.78),
                1.0,
                false,
            ));
            scene.objects.push(obj(
                "marker pen",
                "marker_pen",
                Vec3::new(0.1, 0.25, 0.7675),
                1.0,
                false,
            ));
            scene.object_mut("apple").unwrap().pose.p = Vec3::new(0.08, -0.05, 0.8);
        }
        2 => {
            // Apple out of reach, bottle behind the robot.
            scene.object_mut("apple").unwrap().pose.p = Vec3::new(0.7 + shift, 0.0, 0.8);
            scene.object_mut("bottle").unwrap().pose.p = Vec3::new(-0.8, 0.3, 0.88);
        }
        3 => {
            // Tilted bowl and a cup hovering above the table.
            let bowl = scene.object_mut("bowl").unwrap();
            bowl.pose.q = Quat::from_axis_angle(Vec3::X, 0.6);
            bowl.pose.p[2] = 0.85;
            scene.objects.push(obj(
                "cup",
                "cup",
                Vec3::new(0.15 + shift, 0.42, 0.95),
                1.0,
                false,
            ));
        }
        _ => {
            // Drawer parked on the table footprint, banana sunk into the top.
            scene.objects.push(obj(
                "drawer",
                "drawer",
                Vec3::new(0.5, 0.0, 0.3),
                1.0,
                true,
            ));
            scene.objects.push(obj(
                "banana",
                "banana",
                Vec3::new(-0.1, 0.4, 0.76),
                1.0,
                false,
            ));
        }
    }
    scene
}

pub fn corpus() -> Vec<SceneConfig> {
    (0..CORPUS_SIZE).map(corpus_scene).collect()
}
