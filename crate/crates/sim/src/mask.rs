//! DoF-mask catalog: which joints each control mode leaves active.

use dexgen_core::scenegen::ControlJoint;

use crate::model::{ARM_DOF, HAND_DOF};

/// Finger group index ranges in the flat 22-joint hand vector.
pub const GROUP_RANGES: [(usize, usize); 5] = [(0, 5), (5, 9), (9, 13), (13, 17), (17, 22)];
/// Arm index of the wrist-1 joint used by the lift_inspire mode.
pub const WRIST_1_INDEX: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofMask {
    pub arm: [bool; ARM_DOF],
    pub hand: [bool; HAND_DOF],
    pub mode: ControlJoint,
}

impl DofMask {
    pub fn active_count(&self) -> usize {
        self.arm.iter().filter(|b| **b).count() + self.hand.iter().filter(|b| **b).count()
    }

    /// Expand an action over active joints into full-width joint deltas;
    /// masked joints receive exactly zero.
    pub fn expand(&self, action: &[f64]) -> ([f64; ARM_DOF], [f64; HAND_DOF]) {
        debug_assert_eq!(action.len(), self.active_count());
        let mut arm = [0.0; ARM_DOF];
        let mut hand = [0.0; HAND_DOF];
        let mut cursor = 0;
        for (i, active) in self.arm.iter().enumerate() {
            if *active {
                arm[i] = action[cursor];
                cursor += 1;
            }
        }
        for (i, active) in self.hand.iter().enumerate() {
            if *active {
                hand[i] = action[cursor];
                cursor += 1;
            }
        }
        (arm, hand)
    }

    /// Indices of active joints in (arm, hand) order; arm joints use
    /// 0..6, hand joints 6..28.
    pub fn active_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, active) in self.arm.iter().enumerate() {
            if *active {
                out.push(i);
            }
        }
        for (i, active) in self.hand.iter().enumerate() {
            if *active {
                out.push(ARM_DOF + i);
            }
        }
        out
    }
}

fn group_mask(groups: &[usize]) -> [bool; HAND_DOF] {
    let mut mask = [false; HAND_DOF];
    for g in groups {
        let (lo, hi) = GROUP_RANGES[*g];
        for slot in mask.iter_mut().take(hi).skip(lo) {
            *slot = true;
        }
    }
    mask
}

/// The six named control modes.
pub fn dof_mask(mode: ControlJoint) -> DofMask {
    let (arm, hand) = match mode {
        ControlJoint::Arm => ([true; ARM_DOF], [false; HAND_DOF]),
        ControlJoint::Hand => ([false; ARM_DOF], [true; HAND_DOF]),
        ControlJoint::Both => ([true; ARM_DOF], [true; HAND_DOF]),
        // Thumb, index, middle only.
        ControlJoint::ThreeFinger => ([false; ARM_DOF], group_mask(&[0, 1, 2])),
        // Full arm plus thumb and middle finger.
        ControlJoint::ArmTwoFinger => ([true; ARM_DOF], group_mask(&[0, 2])),
        ControlJoint::LiftInspire => {
            let mut arm = [false; ARM_DOF];
            arm[WRIST_1_INDEX] = true;
            (arm, [true; HAND_DOF])
        }
    };
    DofMask { arm, hand, mode }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn active_counts_match_mode_table() {
        assert_eq!(dof_mask(ControlJoint::Arm).active_count(), 6);
        assert_eq!(dof_mask(ControlJoint::Hand).active_count(), 22);
        assert_eq!(dof_mask(ControlJoint::Both).active_count(), 28);
        assert_eq!(dof_mask(ControlJoint::ThreeFinger).active_count(), 13);
        assert_eq!(dof_mask(ControlJoint::ArmTwoFinger).active_count(), 15);
        assert_eq!(dof_mask(ControlJoint::LiftInspire).active_count(), 23);
    }

    #[test]
    fn mode_table_totals_match_golden_sum() {
        let total: usize = [
            ControlJoint::Arm,
            ControlJoint::Hand,
            ControlJoint::Both,
            ControlJoint::ThreeFinger,
            ControlJoint::ArmTwoFinger,
            ControlJoint::LiftInspire,
        ]
        .iter()
        .map(|m| dof_mask(*m).active_count())
        .sum();
        assert_eq!(total, 107);
    }

    #[test]
    fn arm_mode_freezes_every_hand_joint() {
        let mask = dof_mask(ControlJoint::Arm);
        assert!(mask.arm.iter().all(|a| *a));
        assert!(mask.hand.iter().all(|h| !*h));
    }

    #[test]
    fn three_finger_freezes_ring_and_little() {
        let mask = dof_mask(ControlJoint::ThreeFinger);
        assert!(mask.arm.iter().all(|a| !*a));
        for i in 0..13 {
            assert!(mask.hand[i], "joint {i} should be active");
        }
        for i in 13..22 {
            assert!(!mask.hand[i], "joint {i} should be frozen");
        }
    }

    #[test]
    fn lift_inspire_activates_wrist_1_and_all_fingers() {
        let mask = dof_mask(ControlJoint::LiftInspire);
        for (i, active) in mask.arm.iter().enumerate() {
            assert_eq!(*active, i == WRIST_1_INDEX, "arm joint {i}");
        }
        assert!(mask.hand.iter().all(|h| *h));
    }

    #[test]
    fn expand_zeroes_masked_joints() {
        let mask = dof_mask(ControlJoint::ArmTwoFinger);
        let action: Vec<f64> = (0..mask.active_count()).map(|i| 0.1 + i as f64).collect();
        let (arm, hand) = mask.expand(&action);
        assert_eq!(arm[0], 0.1);
        for (lo, hi) in [GROUP_RANGES[1], GROUP_RANGES[3], GROUP_RANGES[4]] {
            for value in hand.iter().take(hi).skip(lo) {
                assert_eq!(*value, 0.0);
            }
        }
        assert_ne!(hand[GROUP_RANGES[0].0], 0.0);
        assert_ne!(hand[GROUP_RANGES[2].0], 0.0);
    }
}
