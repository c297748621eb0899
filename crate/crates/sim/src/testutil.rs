//! Shared helpers for integration-style tests and stage setup.

use dexgen_core::catalog::Catalog;
use dexgen_core::math::Vec3;
use dexgen_core::scenegen::{parse_config, SceneConfig};

use crate::model::{forward_kinematics, ARM_DOF};
use crate::world::WorldState;

/// One-object tabletop scene used across tests.
pub fn single_object_scene(asset: &str, name: &str, p: Vec3, scale: f64) -> SceneConfig {
    parse_config(&format!(
        r#"
objects:
  - name: {name}
    asset_id: {asset}
    pose: {{ p: [{}, {}, {}], q: [1.0, 0.0, 0.0, 0.0] }}
    scale: {scale}
    static: false
"#,
        p.x(),
        p.y(),
        p.z()
    ))
    .expect("test scene parses")
}

pub fn builtin_catalog() -> Catalog {
    Catalog::builtin()
}

impl WorldState {
    /// Directly set an env's arm configuration and refresh derived poses.
    /// Test and setup utility; trajectory generation always goes through
    /// `step_control`.
    pub fn set_arm_qpos(&mut self, env_index: usize, qpos: &[f64; ARM_DOF]) {
        let env = &mut self.envs[env_index];
        env.robot.arm_qpos = *qpos;
        let fk = forward_kinematics(
            &self.model,
            &self.base_pose,
            &env.robot.arm_qpos,
            &env.robot.hand_qpos,
        );
        env.robot.palm = fk.palm;
        env.robot.tips = fk.tips;
    }

    /// Directly set an env's hand configuration and refresh derived poses.
    pub fn set_hand_qpos(&mut self, env_index: usize, qpos: &[f64]) {
        let env = &mut self.envs[env_index];
        env.robot.hand_qpos.copy_from_slice(qpos);
        let fk = forward_kinematics(
            &self.model,
            &self.base_pose,
            &env.robot.arm_qpos,
            &env.robot.hand_qpos,
        );
        env.robot.palm = fk.palm;
        env.robot.tips = fk.tips;
    }
}
