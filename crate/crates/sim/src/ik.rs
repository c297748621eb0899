//! Damped-least-squares inverse kinematics for palm targets, using a numeric
//! Jacobian over the six arm joints.

use dexgen_core::math::{solve_dense, Vec3};
use dexgen_core::scenegen::Pose;

use crate::model::{forward_kinematics, RobotModel, ARM_DOF, HAND_DOF};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkTolerance {
    pub pos: f64,
    pub ang: f64,
}

impl Default for IkTolerance {
    fn default() -> Self {
        IkTolerance {
            pos: 0.005,
            ang: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IkParams {
    pub tolerance: IkTolerance,
    pub damping: f64,
    pub max_iters: usize,
    /// Per-iteration joint step clamp, radians.
    pub max_step: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        IkParams {
            tolerance: IkTolerance::default(),
            damping: 0.1,
            max_iters: 200,
            max_step: 0.2,
        }
    }
}

/// Non-convergence is a value, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum IkOutcome {
    Converged {
        qpos: [f64; ARM_DOF],
        iterations: usize,
    },
    Failed {
        best_qpos: [f64; ARM_DOF],
        pos_residual: f64,
        ang_residual: f64,
    },
}

fn pose_error(current: &Pose, target: &Pose) -> ([f64; 6], f64, f64) {
    let dp = target.p - current.p;
    // Rotation error as an axis-angle vector of target * current^-1.
    let rel = target.q.mul(&current.q.conj()).normalized().canonical();
    let angle = 2.0 * rel.w().clamp(-1.0, 1.0).acos();
    let s = (1.0 - rel.w() * rel.w()).sqrt();
    let axis = if s > 1e-9 {
        Vec3::new(rel.0[1] / s, rel.0[2] / s, rel.0[3] / s)
    } else {
        Vec3::ZERO
    };
    let rot = axis * angle;
    (
        [dp.x(), dp.y(), dp.z(), rot.x(), rot.y(), rot.z()],
        dp.norm(),
        angle.abs(),
    )
}

/// Solve for arm joint values whose palm pose matches the target.
pub fn solve_ik(
    model: &RobotModel,
    base: &Pose,
    target: &Pose,
    q0: &[f64; ARM_DOF],
    params: &IkParams,
) -> IkOutcome {
    assert!(
        (target.q.norm() - 1.0).abs() < 1e-6,
        "target quaternion must be unit"
    );
    let hand = [0.0; HAND_DOF];
    let limits = model.arm_limits();
    let mut q = *q0;
    for i in 0..ARM_DOF {
        q[i] = q[i].clamp(limits[i].0, limits[i].1);
    }

    let mut best = q;
    let mut best_pos = f64::MAX;
    let mut best_ang = f64::MAX;

    for iteration in 0..params.max_iters {
        let fk = forward_kinematics(model, base, &q, &hand);
        let (err, pos_res, ang_res) = pose_error(&fk.palm, target);
        if pos_res < best_pos {
            best_pos = pos_res;
            best_ang = ang_res;
            best = q;
        }
        if pos_res <= params.tolerance.pos && ang_res <= params.tolerance.ang {
            return IkOutcome::Converged {
                qpos: q,
                iterations: iteration,
            };
        }

        // Numeric Jacobian by central differences.
        let h = 1e-6;
        let mut jac = [[0.0; ARM_DOF]; 6];
        for k in 0..ARM_DOF {
            let mut plus = q;
            let mut minus = q;
            plus[k] += h;
            minus[k] -= h;
            let fp = forward_kinematics(model, base, &plus, &hand);
            let fm = forward_kinematics(model, base, &minus, &hand);
            let dp = (fp.palm.p - fm.palm.p) * (1.0 / (2.0 * h));
            let rel = fp.palm.q.mul(&fm.palm.q.conj()).normalized().canonical();
            let angle = 2.0 * rel.w().clamp(-1.0, 1.0).acos();
            let s = (1.0 - rel.w() * rel.w()).sqrt();
            let rot = if s > 1e-12 {
                Vec3::new(rel.0[1] / s, rel.0[2] / s, rel.0[3] / s) * (angle / (2.0 * h))
            } else {
                Vec3::ZERO
            };
            for row in 0..3 {
                jac[row][k] = dp[row];
                jac[row + 3][k] = rot[row];
            }
        }

        // dq = J^T (J J^T + lambda^2 I)^{-1} e
        let lambda2 = params.damping * params.damping;
        let mut jjt = vec![vec![0.0; 6]; 6];
        for r in 0..6 {
            for c in 0..6 {
                let mut acc = 0.0;
                for k in 0..ARM_DOF {
                    acc += jac[r][k] * jac[c][k];
                }
                jjt[r][c] = acc + if r == c { lambda2 } else { 0.0 };
            }
        }
        let Some(y) = solve_dense(&jjt, &err) else {
            break;
        };
        for k in 0..ARM_DOF {
            let mut dq = 0.0;
            for r in 0..6 {
                dq += jac[r][k] * y[r];
            }
            q[k] = (q[k] + dq.clamp(-params.max_step, params.max_step))
                .clamp(limits[k].0, limits[k].1);
        }
    }

    IkOutcome::Failed {
        best_qpos: best,
        pos_residual: best_pos,
        ang_residual: best_ang,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dexgen_core::math::Quat;

    fn base() -> Pose {
        Pose {
            p: Vec3::new(-0.5, 0.0, 0.0),
            q: Quat::IDENTITY,
        }
    }

    #[test]
    fn fixed_point_converges_immediately() {
        let model = RobotModel::builtin();
        let q0 = model.home_arm_qpos;
        let fk = forward_kinematics(&model, &base(), &q0, &[0.0; HAND_DOF]);
        match solve_ik(&model, &base(), &fk.palm, &q0, &IkParams::default()) {
            IkOutcome::Converged { iterations, qpos } => {
                assert!(iterations <= 2, "iterations {iterations}");
                for k in 0..ARM_DOF {
                    assert!((qpos[k] - q0[k]).abs() < 0.05);
                }
            }
            other => panic!("expected convergence, got {other:?}"),
        }
    }

    #[test]
    fn reachable_target_round_trips_through_fk() {
        let model = RobotModel::builtin();
        // Target produced by a reachable joint configuration.
        let q_goal = [0.3, -0.7, 1.5, 0.1, -0.7, 0.2];
        let target = forward_kinematics(&model, &base(), &q_goal, &[0.0; HAND_DOF]).palm;
        let params = IkParams::default();
        match solve_ik(&model, &base(), &target, &model.home_arm_qpos, &params) {
            IkOutcome::Converged { qpos, .. } => {
                let reached = forward_kinematics(&model, &base(), &qpos, &[0.0; HAND_DOF]).palm;
                assert!((reached.p - target.p).norm() <= params.tolerance.pos);
                assert!(reached.q.angle_to(&target.q) <= params.tolerance.ang + 1e-9);
            }
            IkOutcome::Failed {
                pos_residual,
                ang_residual,
                ..
            } => panic!("IK failed: pos {pos_residual} ang {ang_residual}"),
        }
    }

    #[test]
    fn unreachable_target_reports_residual() {
        let model = RobotModel::builtin();
        let target = Pose {
            p: Vec3::new(4.5, 0.0, 0.5),
            q: Quat::IDENTITY,
        };
        match solve_ik(
            &model,
            &base(),
            &target,
            &model.home_arm_qpos,
            &IkParams::default(),
        ) {
            IkOutcome::Failed { pos_residual, .. } => {
                assert!(pos_residual > 1.0, "residual {pos_residual}");
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn results_respect_joint_limits() {
        let model = RobotModel::builtin();
        let target = Pose {
            p: Vec3::new(0.2, 0.4, 0.9),
            q: Quat::from_axis_angle(Vec3::Y, 0.8),
        };
        let outcome = solve_ik(
            &model,
            &base(),
            &target,
            &model.home_arm_qpos,
            &IkParams::default(),
        );
        let q = match outcome {
            IkOutcome::Converged { qpos, .. } => qpos,
            IkOutcome::Failed { best_qpos, .. } => best_qpos,
        };
        for (value, (lo, hi)) in q.iter().zip(model.arm_limits()) {
            assert!(*value >= lo - 1e-12 && *value <= hi + 1e-12);
        }
    }
}
