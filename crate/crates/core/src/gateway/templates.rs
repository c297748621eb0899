//! Prompt templates for every model interaction in the pipeline.
//!
//! Placeholders use `{{name}}` markers; each template declares exactly the
//! bindings its body consumes. Literal braces elsewhere (JSON/YAML examples)
//! are left untouched by rendering.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Proposal,
    SceneConfig,
    SceneAnalysis,
    InstructionToTask,
    RewardSpec,
    SubstageGuidance,
}

impl TemplateName {
    pub const ALL: [TemplateName; 6] = [
        TemplateName::Proposal,
        TemplateName::SceneConfig,
        TemplateName::SceneAnalysis,
        TemplateName::InstructionToTask,
        TemplateName::RewardSpec,
        TemplateName::SubstageGuidance,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateName::Proposal => "proposal",
            TemplateName::SceneConfig => "scene_config",
            TemplateName::SceneAnalysis => "scene_analysis",
            TemplateName::InstructionToTask => "instruction_to_task",
            TemplateName::RewardSpec => "reward_spec",
            TemplateName::SubstageGuidance => "substage_guidance",
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: &'static str,
    pub required_bindings: Vec<&'static str>,
}

impl PromptTemplate {
    pub fn get(name: TemplateName) -> PromptTemplate {
        let (body, required): (&'static str, &[&'static str]) = match name {
            TemplateName::Proposal => (
                PROPOSAL_BODY,
                &["ycb_assets", "laptop_assets", "semantic_guidance"],
            ),
            TemplateName::SceneConfig => (
                SCENE_CONFIG_BODY,
                &[
                    "task_proposal",
                    "reference_yaml",
                    "ycb_assets",
                    "laptop_assets",
                    "semantic_guidance",
                ],
            ),
            TemplateName::SceneAnalysis => (SCENE_ANALYSIS_BODY, &["scene_report"]),
            TemplateName::InstructionToTask => (
                INSTRUCTION_TO_TASK_BODY,
                &[
                    "human_instruction",
                    "ycb_assets",
                    "laptop_assets",
                    "semantic_guidance",
                ],
            ),
            TemplateName::RewardSpec => (
                REWARD_SPEC_BODY,
                &[
                    "env_yaml",
                    "current_stage_instruction",
                    "full_task_instruction",
                    "control_joint",
                ],
            ),
            TemplateName::SubstageGuidance => (
                SUBSTAGE_GUIDANCE_BODY,
                &[
                    "env_yaml",
                    "current_stage_instruction",
                    "full_task_instruction",
                ],
            ),
        };
        PromptTemplate {
            name,
            body,
            required_bindings: required.to_vec(),
        }
    }

    /// Placeholder names that actually occur in the body, in order of first
    /// appearance.
    pub fn placeholders_in_body(&self) -> Vec<String> {
        let mut found = Vec::new();
        let bytes = self.body.as_bytes();
        let mut i = 0;
        while i + 1 < bytes.len() {
            if bytes[i] == b'{' && bytes[i + 1] == b'{' {
                if let Some(end) = self.body[i + 2..].find("}}") {
                    let name = &self.body[i + 2..i + 2 + end];
                    if !name.is_empty()
                        && name
                            .bytes()
                            .all(|b| b.is_ascii_alphanumeric() || b == b'_')
                        && !found.iter().any(|f| f == name)
                    {
                        found.push(name.to_string());
                    }
                    i += 2 + end + 2;
                    continue;
                }
            }
            i += 1;
        }
        found
    }

    /// Substitute every placeholder; bindings must cover the required set
    /// exactly.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        for required in &self.required_bindings {
            if !bindings.contains_key(*required) {
                return Err(GatewayError::UnboundPlaceholder {
                    template: self.name,
                    placeholder: (*required).to_string(),
                });
            }
        }
        for key in bindings.keys() {
            if !self.required_bindings.iter().any(|r| r == key) {
                return Err(GatewayError::UnexpectedBinding {
                    template: self.name,
                    binding: key.clone(),
                });
            }
        }
        let mut out = self.body.to_string();
        for (key, value) in bindings {
            out = out.replace(&format!("{{{{{key}}}}}"), value);
        }
        Ok(out)
    }
}

const PROPOSAL_BODY: &str = r#"You design desktop manipulation tasks for a robot arm fitted with a
five-finger hand. Propose exactly one new task using only objects from the
inventories below.

Rules for task steps:
- Use between 1 and 5 steps.
- Every step is one atomic verb phrase such as "approach", "grasp",
  "release", "move", "open", "close", "push", or "pull" plus its object.
- Never use the compound phrases "pick up", "put down", "place inside", or
  "move to position"; split them into their atomic parts instead.
- For each step choose a control mode: hand (finger work), arm (gross
  motion), or both (coordinated motion).

Object rules:
- Choose one articulated object, one pickable item, and one tabletop object.
- Articulated objects must be referenced with a model id copied verbatim
  from the inventory; model ids are plain decimal numbers. Never invent an
  id and never use descriptive ids such as "cabinet_001".
- Prefer combinations that make everyday sense.

Inventories:
1. Pickable items: {{ycb_assets}}
2. Tabletop objects: {{laptop_assets}}
3. Articulated objects and semantics: {{semantic_guidance}}

Respond in exactly this layout (one field per line, steps numbered):

TASK PROPOSAL
Task Name: <short name>
PartNet Object: <category> (Model ID: <digits>)
YCB Object: <id>
Robotwin Object: <id>
Step 1: <atomic action> [hand|arm|both]
Step 2: <optional>
Environment: <Kitchen|Dining|Office|...>
Success Criteria: <one sentence>
"#;

const SCENE_CONFIG_BODY: &str = r#"You turn a task proposal into a complete scene configuration document.

Task proposal:
{{task_proposal}}

Reference document (copy its structure exactly; change values only, never
keys, and never add new keys):
{{reference_yaml}}

Inventories:
1. Pickable items: {{ycb_assets}}
2. Tabletop objects: {{laptop_assets}}
3. Articulated objects and semantics: {{semantic_guidance}}

Coordinate conventions:
- The robot base sits at [-0.5, 0.0, 0.0]; +X is forward, +Y is left, +Z is
  up; all positions are meters.
- Orientations are quaternions in [w, x, y, z] order.
- The table top is 2.418 m along X by 1.209 m along Y.

Placement rules:
- Articulated objects stand on the ground and must not overlap the table
  footprint.
- Pickable and tabletop objects rest on the table surface.
- Keep every interactive object within 0.8 m horizontal reach of the base.
- Keep clearances of at least 0.05 m between small objects, 0.10 m around
  large objects, and 0.15 m around fragile objects.
- Object scale factors stay within 0.3 to 2.0.

Stage rules:
- Break the task into stages mirroring the proposal steps.
- Each stage declares method: RL or method: motion_planning.
- Every RL stage must declare a control_joint out of arm, hand, both,
  three_finger, arm_two_finger, lift_inspire.

Output only the configuration document, no commentary.
"#;

const SCENE_ANALYSIS_BODY: &str = r#"You inspect a candidate manipulation scene. Three orthographic renders are
attached (left overhead, right overhead, top down) together with the scene
report below.

Check, in order:
1. Reachability: interactive objects within 0.8 m horizontal of the base.
2. Position: nothing behind the robot, nothing buried in other geometry.
3. Size: object proportions must match everyday expectations (a microwave
   is roughly 0.6 x 0.5 x 0.3 m, an apple about 0.08 m across, a bowl about
   0.15 m across and 0.06 m tall). Scales must stay within 0.3-2.0x.
4. Orientation: containers open upward; flat objects lie flat.
5. Support and collision: nothing floats, nothing interpenetrates;
   articulated furniture stands on the ground off the table footprint.

Scene report:
{{scene_report}}

Reply with one correction per line using exactly this grammar, and nothing
else (no corrections means an empty reply):

<object> - scale <factor>
<object> - move_x <meters>   (or move_y / move_z)
<object> - rotate_x <degrees> (or rotate_y / rotate_z)
"#;

const INSTRUCTION_TO_TASK_BODY: &str = r#"You expand a short human instruction into a full manipulation task proposal.

Human instruction: "{{human_instruction}}"

Use only objects from the inventories. If the instruction names an object
that is missing, substitute the closest available item. Keep the task close
to the human's intent and do not inflate it into a long scenario.

Rules for task steps:
- 1 to 5 steps, each one atomic verb phrase plus its object.
- Never use "pick up", "put down", "place inside", or "move to position".
- Each step declares a control mode: hand, arm, or both.
- Articulated objects must use a real decimal model id from the inventory.

Inventories:
1. Pickable items: {{ycb_assets}}
2. Tabletop objects: {{laptop_assets}}
3. Articulated objects and semantics: {{semantic_guidance}}

Respond in exactly this layout:

TASK PROPOSAL
Task Name: <short name>
PartNet Object: <category> (Model ID: <digits>)
YCB Object: <id>
Robotwin Object: <id>
Step 1: <atomic action> [hand|arm|both]
Environment: <Kitchen|Dining|Office|...>
Success Criteria: <one sentence>
"#;

const REWARD_SPEC_BODY: &str = r#"You write the declarative learning specification for one training stage of a
manipulation task. The stage is solved by an on-policy learner; your output
is a JSON document, not code.

Environment configuration:
{{env_yaml}}

Current stage: {{current_stage_instruction}}
Full task: {{full_task_instruction}}
Active control mode: {{control_joint}}

The document has this shape:

{"reward": {"terms": [{"kind": "distance", "weight": 1.0,
  "subject": {"kind": "palm"}, "target": {"kind": "object", "name": "x"},
  "shaping": {"kind": "exp_decay", "scale": 0.2}}]},
 "eval": {"success": [{"kind": "distance_below", "subject": {"kind": "palm"},
  "target": {"kind": "object", "name": "x"}, "threshold": 0.05}],
  "fail": [{"kind": "dropped_below_z", "object": "x", "z": 0.5}]}}

Guidelines:
- Reward terms may use kinds distance, orientation, contact, joint_target,
  action_penalty, lift_height with shaping neg_l2 or exp_decay.
- Combine a smooth approach or manipulation signal with at most one small
  action penalty; do not reward only the success condition.
- Success predicates: distance_below, qpos_beyond, height_above,
  orientation_within. Fail predicates: dropped_below_z, out_of_workspace.
- Success and failure must be mutually exclusive by construction.
- Every referenced object must exist in the environment configuration.

Output only the JSON document.
"#;

const SUBSTAGE_GUIDANCE_BODY: &str = r#"Context for one training stage of a dexterous manipulation task.

Joint-freezing modes (control_joint):
- arm: only the six arm joints move; all fingers hold position.
- hand: only the 22 finger joints move; the arm holds position.
- both: arm and fingers all move.
- three_finger: thumb, index, and middle fingers move; everything else
  holds.
- arm_two_finger: arm plus thumb and middle finger move.
- lift_inspire: the wrist-1 arm joint plus all fingers move.

Environment configuration:
{{env_yaml}}

Current stage: {{current_stage_instruction}}
Full task: {{full_task_instruction}}

Optimize for the current stage; use the full task only for context.
"#;
