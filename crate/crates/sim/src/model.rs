//! Robot model: link-parameter table and closed-form forward kinematics for
//! the 6-DoF arm plus 22-joint five-finger hand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use dexgen_core::math::{Quat, Vec3};
use dexgen_core::scenegen::Pose;

use crate::SimError;

pub const ARM_DOF: usize = 6;
pub const HAND_DOF: usize = 22;
/// Finger groups in contact-report order.
pub const FINGER_NAMES: [&str; 5] = ["th", "ff", "mf", "rf", "lf"];
/// Joint counts per finger group.
pub const FINGER_JOINTS: [usize; 5] = [5, 4, 4, 4, 5];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointParam {
    pub name: String,
    pub offset: Vec3,
    pub axis: Vec3,
    pub limits: (f64, f64),
    pub vel_limit: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerParam {
    pub name: String,
    pub tip_offset: Vec3,
    pub tip_radius: f64,
    pub joints: Vec<JointParam>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSphere {
    /// Arm frame index: 0 = column top, k = after arm joint k-1.
    pub frame: usize,
    pub local: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel {
    pub column_offset: Vec3,
    pub arm: Vec<JointParam>,
    pub palm_offset: Vec3,
    pub home_arm_qpos: [f64; ARM_DOF],
    pub fingers: Vec<FingerParam>,
    pub collision_spheres: Vec<LinkSphere>,
    pub palm_radius: f64,
}

impl RobotModel {
    pub fn from_str(text: &str) -> Result<RobotModel, SimError> {
        let model: RobotModel =
            serde_yaml::from_str(text).map_err(|e| SimError::ModelTable(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<RobotModel, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SimError::ModelTable(format!("{}: {}", path.display(), e))
        })?;
        RobotModel::from_str(&text)
    }

    pub fn builtin() -> RobotModel {
        RobotModel::from_str(include_str!("../assets/robot_links.yaml"))
            .expect("builtin link table must be valid")
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.arm.len() != ARM_DOF {
            return Err(SimError::ModelTable(format!(
                "expected {ARM_DOF} arm joints, found {}",
                self.arm.len()
            )));
        }
        if self.fingers.len() != FINGER_NAMES.len() {
            return Err(SimError::ModelTable("expected 5 fingers".into()));
        }
        for (finger, expected) in self.fingers.iter().zip(FINGER_JOINTS) {
            if finger.joints.len() != expected {
                return Err(SimError::ModelTable(format!(
                    "finger {} expected {expected} joints, found {}",
                    finger.name,
                    finger.joints.len()
                )));
            }
        }
        if self.hand_dof() != HAND_DOF {
            return Err(SimError::ModelTable(format!(
                "hand must total {HAND_DOF} joints"
            )));
        }
        for j in self.arm.iter().chain(self.fingers.iter().flat_map(|f| &f.joints)) {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(SimError::ModelTable(format!(
                    "joint {} axis is not unit",
                    j.name
                )));
            }
            if j.limits.0 >= j.limits.1 {
                return Err(SimError::ModelTable(format!(
                    "joint {} has empty limit range",
                    j.name
                )));
            }
        }
        Ok(())
    }

    pub fn hand_dof(&self) -> usize {
        self.fingers.iter().map(|f| f.joints.len()).sum()
    }

    /// Start index of each finger group in the flat 22-joint vector.
    pub fn group_offsets(&self) -> [usize; 5] {
        let mut offsets = [0usize; 5];
        let mut acc = 0;
        for (i, finger) in self.fingers.iter().enumerate() {
            offsets[i] = acc;
            acc += finger.joints.len();
        }
        offsets
    }

    pub fn arm_limits(&self) -> [(f64, f64); ARM_DOF] {
        let mut out = [(0.0, 0.0); ARM_DOF];
        for (i, j) in self.arm.iter().enumerate() {
            out[i] = j.limits;
        }
        out
    }

    pub fn hand_limits(&self) -> Vec<(f64, f64)> {
        self.fingers
            .iter()
            .flat_map(|f| f.joints.iter().map(|j| j.limits))
            .collect()
    }

    pub fn serialize(&self) -> String {
        serde_yaml::to_string(self).expect("model serializes")
    }
}

/// Forward-kinematics output: palm, fingertips, and the arm frame chain used
/// for collision proxies.
#[derive(Debug, Clone)]
pub struct FkResult {
    pub palm: Pose,
    pub tips: [Pose; 5],
    /// frames[0] = column top; frames[k] = after arm joint k-1; len 7.
    pub arm_frames: [Pose; ARM_DOF + 1],
}

fn advance(frame: &Pose, offset: &Vec3, axis: &Vec3, qpos: f64) -> Pose {
    let p = frame.p + frame.q.rotate(offset);
    let q = frame
        .q
        .mul(&Quat::from_axis_angle(*axis, qpos))
        .normalized()
        .canonical();
    Pose { p, q }
}

/// Deterministic closed-form chain evaluation over the link table.
pub fn forward_kinematics(
    model: &RobotModel,
    base: &Pose,
    arm_qpos: &[f64; ARM_DOF],
    hand_qpos: &[f64],
) -> FkResult {
    debug_assert_eq!(hand_qpos.len(), HAND_DOF);
    let mut frames = [Pose::identity(); ARM_DOF + 1];
    let mut frame = Pose {
        p: base.p + base.q.rotate(&model.column_offset),
        q: base.q,
    };
    frames[0] = frame;
    for (i, joint) in model.arm.iter().enumerate() {
        frame = advance(&frame, &joint.offset, &joint.axis, arm_qpos[i]);
        frames[i + 1] = frame;
    }
    let palm = Pose {
        p: frame.p + frame.q.rotate(&model.palm_offset),
        q: frame.q,
    };

    let mut tips = [Pose::identity(); 5];
    let mut cursor = 0;
    for (f, finger) in model.fingers.iter().enumerate() {
        let mut fframe = palm;
        for joint in &finger.joints {
            fframe = advance(&fframe, &joint.offset, &joint.axis, hand_qpos[cursor]);
            cursor += 1;
        }
        tips[f] = Pose {
            p: fframe.p + fframe.q.rotate(&finger.tip_offset),
            q: fframe.q,
        };
    }
    FkResult {
        palm,
        tips,
        arm_frames: frames,
    }
}

/// World-space centers of the arm collision spheres for a configuration.
pub fn collision_sphere_centers(model: &RobotModel, fk: &FkResult) -> Vec<(Vec3, f64)> {
    model
        .collision_spheres
        .iter()
        .map(|s| {
            let frame = &fk.arm_frames[s.frame.min(ARM_DOF)];
            (frame.p + frame.q.rotate(&s.local), s.radius)
        })
        .collect()
}

/// Analytic geometric Jacobian of the palm: columns are
/// [axis x (p_palm - p_joint); axis] for each arm joint.
pub fn palm_jacobian(
    model: &RobotModel,
    base: &Pose,
    arm_qpos: &[f64; ARM_DOF],
) -> [[f64; ARM_DOF]; 6] {
    let hand = [0.0; HAND_DOF];
    let fk = forward_kinematics(model, base, arm_qpos, &hand);
    let palm_p = fk.palm.p;

    let mut jac = [[0.0; ARM_DOF]; 6];
    // Joint k's frame-of-rotation: position of frames[k+1] minus its own
    // rotation; the joint origin is frames[k] advanced by the offset.
    let mut frame = fk.arm_frames[0];
    for (k, joint) in model.arm.iter().enumerate() {
        let origin = frame.p + frame.q.rotate(&joint.offset);
        let axis_world = frame.q.rotate(&joint.axis);
        let lin = axis_world.cross(&(palm_p - origin));
        for row in 0..3 {
            jac[row][k] = lin[row];
            jac[row + 3][k] = axis_world[row];
        }
        frame = fk.arm_frames[k + 1];
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Pose {
        Pose {
            p: Vec3::new(-0.5, 0.0, 0.0),
            q: Quat::IDENTITY,
        }
    }

    #[test]
    fn builtin_table_loads() {
        let model = RobotModel::builtin();
        assert_eq!(model.arm.len(), ARM_DOF);
        assert_eq!(model.hand_dof(), HAND_DOF);
        assert_eq!(model.group_offsets(), [0, 5, 9, 13, 17]);
        assert_eq!(model.arm[4].name, "wrist_1");
    }

    #[test]
    fn table_round_trips() {
        let model = RobotModel::builtin();
        let text = model.serialize();
        let again = RobotModel::from_str(&text).unwrap();
        assert_eq!(model.serialize(), again.serialize());
    }

    #[test]
    fn zero_qpos_palm_matches_golden() {
        // Straight chain: column 0.80 + shoulder 0.08 up, links along +X.
        let model = RobotModel::builtin();
        let fk = forward_kinematics(&model, &base(), &[0.0; 6], &[0.0; HAND_DOF]);
        let expected = Vec3::new(-0.5 + 0.45 + 0.40 + 0.12 + 0.10 + 0.11, 0.0, 0.88);
        assert!((fk.palm.p - expected).norm() < 1e-12, "{:?}", fk.palm.p);
        assert!((fk.palm.q.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn base_pan_rotation_is_rigid_about_z() {
        let model = RobotModel::builtin();
        let q0 = [0.3, -0.5, 1.0, 0.2, -0.4, 0.1];
        let mut q1 = q0;
        q1[0] += std::f64::consts::FRAC_PI_2;
        let fk0 = forward_kinematics(&model, &base(), &q0, &[0.0; HAND_DOF]);
        let fk1 = forward_kinematics(&model, &base(), &q1, &[0.0; HAND_DOF]);
        let rel0 = fk0.palm.p - base().p;
        let rel1 = fk1.palm.p - base().p;
        assert!((rel0.norm() - rel1.norm()).abs() < 1e-9);
        let rotated = Quat::from_yaw(std::f64::consts::FRAC_PI_2).rotate(&rel0);
        assert!((rotated - rel1).norm() < 1e-9);
    }

    #[test]
    fn quaternions_stay_unit_along_chain() {
        let model = RobotModel::builtin();
        let hand: Vec<f64> = (0..HAND_DOF).map(|i| 0.1 + 0.03 * i as f64).collect();
        let fk = forward_kinematics(&model, &base(), &[0.2, -0.7, 1.5, 0.4, -0.8, 0.6], &hand);
        assert!((fk.palm.q.norm() - 1.0).abs() < 1e-9);
        for tip in &fk.tips {
            assert!((tip.q.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn analytic_jacobian_matches_central_differences() {
        let model = RobotModel::builtin();
        let q = [0.3, -0.9, 1.4, 0.25, -0.7, 0.5];
        let jac = palm_jacobian(&model, &base(), &q);
        let h = 1e-6;
        for k in 0..ARM_DOF {
            let mut plus = q;
            let mut minus = q;
            plus[k] += h;
            minus[k] -= h;
            let fp = forward_kinematics(&model, &base(), &plus, &[0.0; HAND_DOF]);
            let fm = forward_kinematics(&model, &base(), &minus, &[0.0; HAND_DOF]);
            let numeric = (fp.palm.p - fm.palm.p) * (1.0 / (2.0 * h));
            for row in 0..3 {
                assert!(
                    (jac[row][k] - numeric[row]).abs() < 1e-5,
                    "row {row} joint {k}: analytic {} numeric {}",
                    jac[row][k],
                    numeric[row]
                );
            }
        }
    }

    #[test]
    fn home_pose_hovers_over_the_table_front() {
        let model = RobotModel::builtin();
        let fk = forward_kinematics(&model, &base(), &model.home_arm_qpos, &[0.0; HAND_DOF]);
        let rel = fk.palm.p - base().p;
        assert!(rel.norm_xy() < 0.9, "palm too far: {:?}", fk.palm.p);
        assert!(fk.palm.p.z() > 0.7 && fk.palm.p.z() < 1.1, "{:?}", fk.palm.p);
    }

    #[test]
    fn fingertips_curl_below_palm_when_flexed() {
        let model = RobotModel::builtin();
        let open = vec![0.0; HAND_DOF];
        let mut closed = vec![0.5; HAND_DOF];
        // Little-finger abduction joint stays neutral.
        closed[17] = 0.0;
        let arm = model.home_arm_qpos;
        let fk_open = forward_kinematics(&model, &base(), &arm, &open);
        let fk_closed = forward_kinematics(&model, &base(), &arm, &closed);
        for i in 0..5 {
            let open_rel = fk_open.tips[i].p - fk_open.palm.p;
            let closed_rel = fk_closed.tips[i].p - fk_closed.palm.p;
            let open_local = fk_open.palm.q.conj().rotate(&open_rel);
            let closed_local = fk_closed.palm.q.conj().rotate(&closed_rel);
            assert!(
                closed_local.z() < open_local.z() - 0.02,
                "finger {i}: open {open_local:?} closed {closed_local:?}"
            );
        }
    }
}
