//! Kinematic world and control for the dexgen pipeline: forward kinematics
//! over a shipped link table, vectorized 120 Hz / 20 Hz stepping, proxy
//! contacts and grasping, DoF masks, damped-least-squares IK, and an
//! RRT-Connect arm planner.

#![forbid(unsafe_code)]

pub mod collision;
pub mod ik;
pub mod mask;
pub mod model;
pub mod planner;
pub mod testutil;
pub mod world;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("link-parameter table error: {0}")]
    ModelTable(String),
    #[error("scene refused: error findings present ({0}); pass the override to force")]
    UncleanScene(String),
    #[error("scene references unknown asset '{0}'")]
    UnknownAsset(String),
    #[error(transparent)]
    Scene(#[from] dexgen_core::scenegen::SceneError),
    #[error("action batch has {found} values, expected {expected}")]
    ActionShape { expected: usize, found: usize },
    #[error("action contains a non-finite value")]
    NonFiniteAction,
    #[error("unknown body index {0}")]
    UnknownBodyIndex(usize),
    #[error(transparent)]
    Plan(#[from] planner::PlanError),
}
