//! Scene-configuration data model, validation, and serialization, plus task
//! proposal handling and candidate selection.

pub mod lint;
pub mod proposal;

pub use lint::{lint_scene, lint_score, select_best, LintCode, LintFinding, Severity};
pub use proposal::{propose_task, ControlMode, ProposalStep, TaskProposal};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::math::{Quat, Vec3};

/// Maximum horizontal reach from the robot base, meters.
pub const REACH_RADIUS: f64 = 0.8;
/// Allowed object scale window.
pub const SCALE_MIN: f64 = 0.3;
pub const SCALE_MAX: f64 = 2.0;
/// Table top dimensions, meters.
pub const TABLE_LENGTH: f64 = 2.418;
pub const TABLE_WIDTH: f64 = 1.209;
/// Table surface height above the ground plane; articulated furniture rests
/// on the ground at z = 0.
pub const DEFAULT_TABLE_HEIGHT: f64 = 0.76;
/// Pairwise clearance requirements by object class, meters.
pub const CLEARANCE_SMALL: f64 = 0.05;
pub const CLEARANCE_LARGE: f64 = 0.10;
pub const CLEARANCE_FRAGILE: f64 = 0.15;
/// Objects whose largest scaled extent is below this count as "small".
pub const SMALL_EXTENT_LIMIT: f64 = 0.15;
/// A non-static object may hover at most this far above its support.
pub const FLOAT_TOLERANCE: f64 = 0.005;
/// Containers must stay within this tilt of +Z, degrees.
pub const CONTAINER_TILT_LIMIT_DEG: f64 = 15.0;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("object '{0}' references unknown asset '{1}'")]
    UnresolvedAsset(String, String),
    #[error("duplicate object name '{0}'")]
    DuplicateObject(String),
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Position plus unit quaternion in [w, x, y, z] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub p: Vec3,
    pub q: Quat,
}

impl Pose {
    pub fn identity() -> Pose {
        Pose {
            p: Vec3::ZERO,
            q: Quat::IDENTITY,
        }
    }

    pub fn new(p: Vec3, q: Quat) -> Pose {
        Pose {
            p,
            q: q.normalized().canonical(),
        }
    }

    /// Frame composition: `self` applied to `other` expressed in self's frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            p: self.p + self.q.rotate(&other.p),
            q: self.q.mul(&other.q).normalized().canonical(),
        }
    }

    pub fn transform_point(&self, local: &Vec3) -> Vec3 {
        self.p + self.q.rotate(local)
    }

    pub fn inverse(&self) -> Pose {
        let qinv = self.q.conj();
        Pose {
            p: qinv.rotate(&(Vec3::ZERO - self.p)),
            q: qinv,
        }
    }

    fn validate(&self, path: &str) -> Result<(), SceneError> {
        if !self.p.is_finite() || !self.q.is_finite() {
            return Err(SceneError::Invalid {
                path: path.to_string(),
                reason: "non-finite pose".into(),
            });
        }
        if (self.q.norm() - 1.0).abs() > 1e-6 {
            return Err(SceneError::Invalid {
                path: format!("{path}.q"),
                reason: "q not unit".into(),
            });
        }
        Ok(())
    }
}

fn default_robot_base() -> Pose {
    Pose {
        p: Vec3::new(-0.5, 0.0, 0.0),
        q: Quat::IDENTITY,
    }
}

fn default_table() -> TableSpec {
    TableSpec {
        length: TABLE_LENGTH,
        width: TABLE_WIDTH,
        height: DEFAULT_TABLE_HEIGHT,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    /// Extent along X, meters.
    pub length: f64,
    /// Extent along Y, meters.
    pub width: f64,
    /// Top surface height above the ground, meters.
    pub height: f64,
}

impl TableSpec {
    /// The top slab as an axis-aligned box centered at the origin in XY.
    pub fn slab(&self) -> crate::math::Aabb {
        crate::math::Aabb {
            min: Vec3::new(-self.length / 2.0, -self.width / 2.0, self.height - 0.05),
            max: Vec3::new(self.length / 2.0, self.width / 2.0, self.height),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub name: String,
    pub asset_id: String,
    pub pose: Pose,
    pub scale: f64,
    #[serde(rename = "static")]
    pub is_static: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_qpos: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "RL")]
    Rl,
    #[serde(rename = "motion_planning")]
    MotionPlanning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlJoint {
    Arm,
    Hand,
    Both,
    ThreeFinger,
    ArmTwoFinger,
    LiftInspire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub instruction: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_joint: Option<ControlJoint>,
}

/// The full declarative task environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_robot_base")]
    pub robot_base: Pose,
    #[serde(default = "default_table")]
    pub table: TableSpec,
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub instruction: String,
    #[serde(default)]
    pub background: String,
}

impl SceneConfig {
    pub fn object(&self, name: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn object_mut(&mut self, name: &str) -> Option<&mut SceneObject> {
        self.objects.iter_mut().find(|o| o.name == name)
    }

    /// Structural validation (no catalog required).
    pub fn validate(&self) -> Result<(), SceneError> {
        self.robot_base.validate("robot_base")?;
        if !(self.table.length > 0.0 && self.table.width > 0.0 && self.table.height > 0.0) {
            return Err(SceneError::Invalid {
                path: "table".into(),
                reason: "table dimensions must be positive".into(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, obj) in self.objects.iter().enumerate() {
            let path = format!("objects[{i}]");
            if obj.name.is_empty() {
                return Err(SceneError::Invalid {
                    path: format!("{path}.name"),
                    reason: "empty object name".into(),
                });
            }
            if !seen.insert(obj.name.clone()) {
                return Err(SceneError::DuplicateObject(obj.name.clone()));
            }
            obj.pose.validate(&format!("{path}.pose"))?;
            if !(obj.scale > 0.0 && obj.scale.is_finite()) {
                return Err(SceneError::Invalid {
                    path: format!("{path}.scale"),
                    reason: format!("scale {} must be positive", obj.scale),
                });
            }
        }
        for (i, stage) in self.stages.iter().enumerate() {
            if stage.method == Method::Rl && stage.control_joint.is_none() {
                return Err(SceneError::Invalid {
                    path: format!("stages[{i}]"),
                    reason: "RL stages must declare a control_joint".into(),
                });
            }
        }
        Ok(())
    }

    /// Validation against a catalog: every asset resolves, init_qpos within
    /// the asset's joint limits.
    pub fn validate_with_catalog(&self, catalog: &Catalog) -> Result<(), SceneError> {
        self.validate()?;
        for obj in &self.objects {
            let record = catalog
                .get(&obj.asset_id)
                .ok_or_else(|| SceneError::UnresolvedAsset(obj.name.clone(), obj.asset_id.clone()))?;
            if let (Some(qpos), Some((lo, hi))) = (obj.init_qpos, record.default_joint_limits) {
                if qpos < lo - 1e-9 || qpos > hi + 1e-9 {
                    return Err(SceneError::Invalid {
                        path: format!("objects[{}].init_qpos", obj.name),
                        reason: format!("{qpos} outside joint limits [{lo}, {hi}]"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Stable content digest of the serialized document.
    pub fn digest(&self) -> String {
        let text = serialize_config(self);
        format!("{:016x}", crate::gateway::fnv1a64(text.as_bytes()))
    }
}

/// Parse a scene configuration document, enforcing structural invariants.
/// Quaternions are canonicalized to w >= 0; unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<SceneConfig, SceneError> {
    let mut config: SceneConfig =
        serde_yaml::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
    for obj in &mut config.objects {
        if obj.pose.q.w() < 0.0 {
            obj.pose.q = obj.pose.q.canonical();
        }
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &std::path::Path) -> Result<SceneConfig, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Serialize a configuration to its canonical document form.
pub fn serialize_config(config: &SceneConfig) -> String {
    serde_yaml::to_string(config).expect("scene config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal_config_yaml() -> &'static str {
        r#"
robot_base:
  p: [-0.5, 0.0, 0.0]
  q: [1.0, 0.0, 0.0, 0.0]
table:
  length: 2.418
  width: 1.209
  height: 0.76
objects:
  - name: apple
    asset_id: apple
    pose:
      p: [0.1, 0.0, 0.8]
      q: [1.0, 0.0, 0.0, 0.0]
    scale: 1.0
    static: false
stages:
  - instruction: approach apple
    method: RL
    control_joint: arm
instruction: approach the apple
background: kitchen
"#
    }

    #[test]
    fn parses_canonical_document() {
        let config = parse_config(minimal_config_yaml()).unwrap();
        assert_eq!(config.robot_base.p, Vec3::new(-0.5, 0.0, 0.0));
        assert_eq!(config.objects.len(), 1);
        assert_eq!(config.stages[0].control_joint, Some(ControlJoint::Arm));
    }

    #[test]
    fn zero_quaternion_rejected() {
        let text = minimal_config_yaml().replace("q: [1.0, 0.0, 0.0, 0.0]", "q: [0.0, 0.0, 0.0, 0.0]");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("q not unit"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = minimal_config_yaml().replace("background: kitchen", "background: kitchen\nwild_extra_key: 1");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn duplicate_object_names_rejected() {
        let mut config = parse_config(minimal_config_yaml()).unwrap();
        let dup = config.objects[0].clone();
        config.objects.push(dup);
        assert!(matches!(
            config.validate(),
            Err(SceneError::DuplicateObject(_))
        ));
    }

    #[test]
    fn rl_stage_without_control_joint_rejected() {
        let text = minimal_config_yaml().replace("    control_joint: arm\n", "");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn serialize_parse_round_trips_value() {
        let config = parse_config(minimal_config_yaml()).unwrap();
        let doc = serialize_config(&config);
        let again = parse_config(&doc).unwrap();
        assert_eq!(config, again);
        assert_eq!(doc, serialize_config(&again));
    }

    #[test]
    fn negative_w_is_canonicalized() {
        let text = minimal_config_yaml().replace(
            "      q: [1.0, 0.0, 0.0, 0.0]\n    scale",
            "      q: [-1.0, 0.0, 0.0, 0.0]\n    scale",
        );
        let config = parse_config(&text).unwrap();
        assert!(config.objects[0].pose.q.w() > 0.0);
    }
}
