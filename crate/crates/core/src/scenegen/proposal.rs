//! Task proposals: the structured text the proposal prompts ask for, its
//! parser and validator, and the retrying proposal operation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{AssetSource, Catalog};
use crate::gateway::{Gateway, GatewayError, ModelRequest, TemplateName};

/// Compound phrases the prompts forbid; steps must stay atomic.
pub const ACTION_DENY_LIST: [&str; 4] = ["pick up", "put down", "place inside", "move to position"];

pub const MAX_STEPS: usize = 5;

#[derive(Debug, Error)]
pub enum ProposalError {
    #[error("proposal text missing field '{0}'")]
    MissingField(&'static str),
    #[error("step {index}: unknown control mode '{mode}'")]
    BadControlMode { index: usize, mode: String },
    #[error("proposal must have between 1 and {MAX_STEPS} steps, found {0}")]
    StepCount(usize),
    #[error("step {index} uses a compound action ('{phrase}')")]
    CompoundAction { index: usize, phrase: String },
    #[error("objects missing from catalog: {0:?}")]
    MissingObjects(Vec<String>),
    #[error("model id '{given}' does not match catalog entry for '{category}' ({expected})")]
    ModelIdMismatch {
        category: String,
        given: String,
        expected: String,
    },
    #[error("proposal validation exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    Hand,
    Arm,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalStep {
    pub action: String,
    pub control_mode: ControlMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProposal {
    pub task_name: String,
    pub partnet_category: String,
    pub partnet_model_id: String,
    pub ycb_object: String,
    pub robotwin_object: String,
    pub steps: Vec<ProposalStep>,
    pub environment: String,
    pub success_criteria: String,
}

impl TaskProposal {
    /// The three object references the proposal names.
    pub fn referenced_objects(&self) -> Vec<String> {
        vec![
            self.partnet_category.clone(),
            self.ycb_object.clone(),
            self.robotwin_object.clone(),
        ]
    }

    pub fn validate_structure(&self) -> Result<(), ProposalError> {
        if self.steps.is_empty() || self.steps.len() > MAX_STEPS {
            return Err(ProposalError::StepCount(self.steps.len()));
        }
        for (i, step) in self.steps.iter().enumerate() {
            let lower = step.action.to_lowercase();
            for phrase in ACTION_DENY_LIST {
                if lower.contains(phrase) {
                    return Err(ProposalError::CompoundAction {
                        index: i + 1,
                        phrase: phrase.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn validate_against(&self, catalog: &Catalog) -> Result<(), ProposalError> {
        self.validate_structure()?;
        let missing = catalog.validate_references(&self.referenced_objects());
        if !missing.is_empty() {
            return Err(ProposalError::MissingObjects(missing));
        }
        let record = catalog
            .get(&self.partnet_category)
            .expect("checked by reference validation");
        let expected = record.model_id.clone().unwrap_or_default();
        if expected != self.partnet_model_id {
            return Err(ProposalError::ModelIdMismatch {
                category: self.partnet_category.clone(),
                given: self.partnet_model_id.clone(),
                expected,
            });
        }
        Ok(())
    }

    /// Render back to the structured text layout the prompts request.
    pub fn to_text(&self) -> String {
        let mut out = String::from("TASK PROPOSAL\n");
        out.push_str(&format!("Task Name: {}\n", self.task_name));
        out.push_str(&format!(
            "PartNet Object: {} (Model ID: {})\n",
            self.partnet_category, self.partnet_model_id
        ));
        out.push_str(&format!("YCB Object: {}\n", self.ycb_object));
        out.push_str(&format!("Robotwin Object: {}\n", self.robotwin_object));
        for (i, step) in self.steps.iter().enumerate() {
            let mode = match step.control_mode {
                ControlMode::Hand => "hand",
                ControlMode::Arm => "arm",
                ControlMode::Both => "both",
            };
            out.push_str(&format!("Step {}: {} [{}]\n", i + 1, step.action, mode));
        }
        out.push_str(&format!("Environment: {}\n", self.environment));
        out.push_str(&format!("Success Criteria: {}\n", self.success_criteria));
        out
    }
}

fn field<'a>(text: &'a str, label: &'static str) -> Result<&'a str, ProposalError> {
    text.lines()
        .find_map(|line| line.trim().strip_prefix(label))
        .map(|rest| rest.trim_start_matches(':').trim())
        .ok_or(ProposalError::MissingField(label))
}

/// Parse the structured proposal layout.
pub fn parse_proposal(text: &str) -> Result<TaskProposal, ProposalError> {
    let partnet_raw = field(text, "PartNet Object")?;
    let (category, model_id) = match partnet_raw.split_once("(Model ID:") {
        Some((cat, rest)) => (
            cat.trim().to_string(),
            rest.trim_end_matches(')').trim().to_string(),
        ),
        None => (partnet_raw.to_string(), String::new()),
    };

    let mut steps = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        let Some(rest) = line.strip_prefix("Step ") else {
            continue;
        };
        let Some((index_part, body)) = rest.split_once(':') else {
            continue;
        };
        let index = steps.len() + 1;
        let _ = index_part;
        let body = body.trim();
        let (action, mode) = match body.rsplit_once('[') {
            Some((action, mode)) => (action.trim(), mode.trim_end_matches(']').trim()),
            None => (body, "both"),
        };
        let control_mode = match mode.to_lowercase().as_str() {
            "hand" => ControlMode::Hand,
            "arm" => ControlMode::Arm,
            "both" => ControlMode::Both,
            other => {
                return Err(ProposalError::BadControlMode {
                    index,
                    mode: other.to_string(),
                })
            }
        };
        steps.push(ProposalStep {
            action: action.to_string(),
            control_mode,
        });
    }

    let proposal = TaskProposal {
        task_name: field(text, "Task Name")?.to_string(),
        partnet_category: category,
        partnet_model_id: model_id,
        ycb_object: field(text, "YCB Object")?.to_string(),
        robotwin_object: field(text, "Robotwin Object")?.to_string(),
        steps,
        environment: field(text, "Environment")?.to_string(),
        success_criteria: field(text, "Success Criteria")?.to_string(),
    };
    proposal.validate_structure()?;
    Ok(proposal)
}

/// Asset-listing bindings for the proposal-family templates, derived
/// deterministically from the catalog.
pub fn proposal_bindings(catalog: &Catalog) -> std::collections::BTreeMap<String, String> {
    let mut bindings = std::collections::BTreeMap::new();
    bindings.insert(
        "ycb_assets".to_string(),
        catalog.ids_by_source(AssetSource::Ycb).join(", "),
    );
    bindings.insert(
        "laptop_assets".to_string(),
        catalog.ids_by_source(AssetSource::Robotwin).join(", "),
    );
    let guidance: Vec<String> = catalog
        .records()
        .iter()
        .filter(|r| r.source == AssetSource::Partnet)
        .map(|r| {
            format!(
                "{} (Model ID: {}) dims {:.2}x{:.2}x{:.2} m",
                r.category,
                r.model_id.as_deref().unwrap_or("-"),
                r.nominal_dims.x(),
                r.nominal_dims.y(),
                r.nominal_dims.z()
            )
        })
        .collect();
    bindings.insert("semantic_guidance".to_string(), guidance.join("\n"));
    bindings
}

/// Ask the gateway for a proposal, retrying with an incremented seed until
/// one passes reference validation or the budget runs out.
pub fn propose_task(
    catalog: &Catalog,
    gateway: &Gateway,
    seed: u64,
    max_retries: u32,
    temperature: Option<f64>,
) -> Result<(TaskProposal, u32), ProposalError> {
    assert!(max_retries >= 1, "max_retries must be >= 1");
    let bindings = proposal_bindings(catalog);
    let mut last: Option<ProposalError> = None;
    for attempt in 0..max_retries {
        let mut request = ModelRequest::new(TemplateName::Proposal, bindings.clone(), seed + attempt as u64);
        if let Some(t) = temperature {
            request = request.with_temperature(t);
        }
        let response = gateway.complete(&request)?;
        match parse_proposal(&response.text).and_then(|p| {
            p.validate_against(catalog)?;
            Ok(p)
        }) {
            Ok(p) => return Ok((p, attempt)),
            Err(e) => last = Some(e),
        }
    }
    Err(ProposalError::RetriesExhausted {
        attempts: max_retries,
        last: last.map(|e| e.to_string()).unwrap_or_default(),
    })
}

/// Deterministic offline proposal used by the synthetic backend.
pub fn synthetic_proposal_text(catalog: &Catalog, seed: u64) -> String {
    let mut rng = crate::rng::CounterRng::new(seed, 0);
    let pick = |ids: &[&str], rng: &mut crate::rng::CounterRng| -> String {
        ids[rng.index(ids.len())].to_string()
    };
    let partnet = pick(&catalog.ids_by_source(AssetSource::Partnet), &mut rng);
    let ycb = pick(&catalog.ids_by_source(AssetSource::Ycb), &mut rng);
    let robotwin = pick(&catalog.ids_by_source(AssetSource::Robotwin), &mut rng);
    let model_id = catalog
        .get(&partnet)
        .and_then(|r| r.model_id.clone())
        .unwrap_or_default();
    let proposal = TaskProposal {
        task_name: format!("move the {ycb} beside the {robotwin}"),
        partnet_category: partnet.clone(),
        partnet_model_id: model_id,
        ycb_object: ycb.clone(),
        robotwin_object: robotwin.clone(),
        steps: vec![
            ProposalStep {
                action: format!("approach {ycb}"),
                control_mode: ControlMode::Arm,
            },
            ProposalStep {
                action: format!("grasp {ycb}"),
                control_mode: ControlMode::Hand,
            },
            ProposalStep {
                action: format!("move {ycb}"),
                control_mode: ControlMode::Both,
            },
        ],
        environment: "Kitchen".to_string(),
        success_criteria: format!("the {ycb} rests next to the {robotwin}"),
    };
    proposal.to_text()
}
