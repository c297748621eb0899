//! Scene refinement: the directive edit grammar, deterministic three-view
//! rendering, verifiers, and the iterative refinement loop.

pub mod corpus;
pub mod render;
pub mod verifier;

pub use render::{render_views, write_ppm, write_svg, ViewImage, Viewpoint, RENDER_SIZE};
pub use verifier::{synthetic_responder, synthetic_verify, ModelVerifier, SceneVerifier, SyntheticVerifier};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::math::{quantize_um, um_to_m, Quat, Vec3};
use crate::scenegen::lint::error_count;
use crate::scenegen::{lint_scene, SceneConfig, SceneError, SCALE_MAX, SCALE_MIN};

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("directive line {line}: {detail}")]
    ParseLine { line: usize, detail: String },
    #[error("directive references unknown object '{0}'")]
    UnknownObject(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}

/// Refinement loop failure that keeps the partial trace.
#[derive(Debug, Error)]
#[error("refinement aborted: {source}")]
pub struct RefineLoopError {
    pub source: RefineError,
    pub trace: RefinementTrace,
    pub last_config: SceneConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(&self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(&self) -> Vec3 {
        match self {
            Axis::X => Vec3::X,
            Axis::Y => Vec3::Y,
            Axis::Z => Vec3::Z,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// One refinement edit on a named object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Directive {
    Scale {
        object: String,
        factor: f64,
    },
    Move {
        object: String,
        axis: Axis,
        delta: f64,
    },
    Rotate {
        object: String,
        axis: Axis,
        angle_deg: f64,
    },
}

impl Directive {
    pub fn object(&self) -> &str {
        match self {
            Directive::Scale { object, .. }
            | Directive::Move { object, .. }
            | Directive::Rotate { object, .. } => object,
        }
    }
}

impl std::fmt::Display for Directive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Directive::Scale { object, factor } => write!(f, "{object} - scale {factor}"),
            Directive::Move {
                object,
                axis,
                delta,
            } => write!(f, "{object} - move_{} {delta}", axis.label()),
            Directive::Rotate {
                object,
                axis,
                angle_deg,
            } => write!(f, "{object} - rotate_{} {angle_deg}", axis.label()),
        }
    }
}

fn axis_of(op: &str) -> Option<Axis> {
    match op {
        "x" => Some(Axis::X),
        "y" => Some(Axis::Y),
        "z" => Some(Axis::Z),
        _ => None,
    }
}

/// Parse directive lines. Non-matching lines are ignored; a matching line
/// with a malformed value is an error carrying the line number. Object names
/// may contain spaces: everything before the final " - " separator.
pub fn parse_directives(text: &str) -> Result<Vec<Directive>, RefineError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let Some(sep) = line.rfind(" - ") else {
            continue;
        };
        let object = line[..sep].trim();
        let rest = line[sep + 3..].trim();
        let mut parts = rest.split_whitespace();
        let Some(op) = parts.next() else { continue };

        let kind: Option<(&str, Option<Axis>)> = if op == "scale" {
            Some(("scale", None))
        } else if let Some(a) = op.strip_prefix("move_").and_then(axis_of) {
            Some(("move", Some(a)))
        } else if let Some(a) = op.strip_prefix("rotate_").and_then(axis_of) {
            Some(("rotate", Some(a)))
        } else {
            None
        };
        let Some((kind, axis)) = kind else { continue };

        if object.is_empty() {
            return Err(RefineError::ParseLine {
                line: line_no,
                detail: "missing object name".into(),
            });
        }
        let value_token = parts.next().ok_or_else(|| RefineError::ParseLine {
            line: line_no,
            detail: format!("missing numeric value after '{op}'"),
        })?;
        let value: f64 = value_token.parse().map_err(|_| RefineError::ParseLine {
            line: line_no,
            detail: format!("non-numeric value '{value_token}'"),
        })?;

        out.push(match kind {
            "scale" => {
                if value <= 0.0 {
                    return Err(RefineError::ParseLine {
                        line: line_no,
                        detail: format!("scale factor {value} must be positive"),
                    });
                }
                Directive::Scale {
                    object: object.to_string(),
                    factor: value,
                }
            }
            "move" => Directive::Move {
                object: object.to_string(),
                axis: axis.unwrap(),
                delta: value,
            },
            _ => Directive::Rotate {
                object: object.to_string(),
                axis: axis.unwrap(),
                angle_deg: value,
            },
        });
    }
    Ok(out)
}

/// Apply one directive, returning the new config and an optional clamp note.
/// The input config is never mutated.
pub fn apply_directive_noted(
    config: &SceneConfig,
    directive: &Directive,
) -> Result<(SceneConfig, Option<String>), RefineError> {
    let mut next = config.clone();
    let name = directive.object().to_string();
    let obj = next
        .object_mut(&name)
        .ok_or_else(|| RefineError::UnknownObject(name.clone()))?;
    let mut note = None;
    match directive {
        Directive::Scale { factor, .. } => {
            let raw = obj.scale * factor;
            let clamped = raw.clamp(SCALE_MIN, SCALE_MAX);
            if clamped != raw {
                note = Some(format!(
                    "{name}: scale {raw:.4} clamped to {clamped:.4}"
                ));
            }
            obj.scale = clamped;
        }
        Directive::Move { axis, delta, .. } => {
            let i = axis.index();
            // Micrometer grid keeps move/unmove pairs exactly invertible.
            let um = quantize_um(obj.pose.p[i]) + quantize_um(*delta);
            obj.pose.p[i] = um_to_m(um);
        }
        Directive::Rotate {
            axis, angle_deg, ..
        } => {
            if *angle_deg != 0.0 {
                let rot = Quat::from_axis_angle(axis.unit(), angle_deg.to_radians());
                obj.pose.q = rot.mul(&obj.pose.q).normalized().canonical();
            }
        }
    }
    Ok((next, note))
}

pub fn apply_directive(
    config: &SceneConfig,
    directive: &Directive,
) -> Result<SceneConfig, RefineError> {
    apply_directive_noted(config, directive).map(|(c, _)| c)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub snapshot: String,
    pub errors: usize,
    pub warns: usize,
    pub directives: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl RefinementTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub config: SceneConfig,
    pub trace: RefinementTrace,
}

/// Drive a verifier to a clean scene: repeat verify -> apply-all until the
/// verifier returns no directives or the iteration budget is spent.
pub fn refine_loop(
    config: &SceneConfig,
    catalog: &Catalog,
    verifier: &dyn SceneVerifier,
    max_iters: usize,
) -> Result<RefineOutcome, RefineLoopError> {
    assert!(max_iters >= 1, "max_iters must be >= 1");
    let mut current = config.clone();
    let mut iterations: Vec<IterationRecord> = Vec::new();

    let abort = |source: RefineError, iterations: Vec<IterationRecord>, last: SceneConfig| {
        RefineLoopError {
            source,
            trace: RefinementTrace {
                iterations,
                converged: false,
            },
            last_config: last,
        }
    };

    for _ in 0..max_iters {
        let findings = match lint_scene(&current, catalog) {
            Ok(f) => f,
            Err(e) => return Err(abort(e.into(), iterations, current)),
        };
        let errors = error_count(&findings);
        let warns = findings.len() - errors;

        let directives = match verifier.suggest(&current, catalog) {
            Ok(d) => d,
            Err(e) => return Err(abort(e, iterations, current)),
        };

        let mut record = IterationRecord {
            snapshot: current.digest(),
            errors,
            warns,
            directives: directives.iter().map(|d| d.to_string()).collect(),
            notes: Vec::new(),
        };

        if directives.is_empty() {
            iterations.push(record);
            return Ok(RefineOutcome {
                config: current,
                trace: RefinementTrace {
                    iterations,
                    converged: errors == 0,
                },
            });
        }

        for directive in &directives {
            match apply_directive_noted(&current, directive) {
                Ok((next, note)) => {
                    current = next;
                    if let Some(n) = note {
                        record.notes.push(n);
                    }
                }
                Err(e) => {
                    iterations.push(record);
                    return Err(abort(e, iterations, current));
                }
            }
        }
        iterations.push(record);
    }

    // Budget exhausted: converged iff the final scene lints clean.
    let converged = match lint_scene(&current, catalog) {
        Ok(findings) => error_count(&findings) == 0,
        Err(e) => return Err(abort(e.into(), iterations, current)),
    };
    Ok(RefineOutcome {
        config: current,
        trace: RefinementTrace {
            iterations,
            converged,
        },
    })
}
