//! Uniform client for text and vision-capable models.
//!
//! Three backends share one call surface: a live HTTP endpoint, recorded
//! fixture playback, and a deterministic synthetic responder. Tests and the
//! default pipeline never touch the network; the HTTP backend must be
//! enabled explicitly.

mod fixtures;
mod http;
mod templates;

pub use fixtures::{fixture_key, fnv1a64, FixtureStore};
pub use templates::{PromptTemplate, TemplateName};

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

/// Environment variable naming the chat-completions endpoint URL.
pub const ENV_MODEL_URL: &str = "DEXGEN_MODEL_URL";
/// Environment variable naming the API credential.
pub const ENV_MODEL_KEY: &str = "DEXGEN_MODEL_KEY";

/// Default sampling temperature for proposal-style requests.
pub const PROPOSAL_TEMPERATURE: f64 = 1.2;
/// Default sampling temperature for configuration-style requests.
pub const CONFIG_TEMPERATURE: f64 = 0.3;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("template {template}: unbound placeholder: {placeholder}")]
    UnboundPlaceholder {
        template: TemplateName,
        placeholder: String,
    },
    #[error("template {template}: unexpected binding: {binding}")]
    UnexpectedBinding {
        template: TemplateName,
        binding: String,
    },
    #[error("temperature {0} outside [0, 2]")]
    TemperatureOutOfRange(f64),
    #[error("images are only accepted on scene_analysis requests")]
    UnexpectedImages,
    #[error("fixture miss for key {key} in {dir}")]
    FixtureMiss { key: String, dir: String },
    #[error("fixture store error at {path}: {detail}")]
    FixtureStore { path: String, detail: String },
    #[error("missing configuration: set {0}")]
    MissingConfiguration(&'static str),
    #[error("http backend is not enabled for this client")]
    HttpNotAllowed,
    #[error("http transport failure after {attempts} attempts: {detail} (retryable)")]
    HttpTransport { attempts: u32, detail: String },
    #[error("http response malformed: {0}")]
    HttpMalformed(String),
    #[error("synthetic responder cannot serve this request: {0}")]
    SyntheticUnsupported(String),
    #[error("synthetic responder failed: {0}")]
    SyntheticFailed(String),
    #[error("model returned empty text")]
    EmptyResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Fixture,
    Synthetic,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendKind::Http => f.write_str("http"),
            BackendKind::Fixture => f.write_str("fixture"),
            BackendKind::Synthetic => f.write_str("synthetic"),
        }
    }
}

/// Rendered view attached to a scene-analysis request.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageAttachment {
    pub label: String,
    /// Raw PPM bytes.
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct ModelRequest {
    pub template: TemplateName,
    pub bindings: BTreeMap<String, String>,
    pub temperature: f64,
    pub images: Vec<ImageAttachment>,
    pub seed: u64,
}

impl ModelRequest {
    pub fn new(template: TemplateName, bindings: BTreeMap<String, String>, seed: u64) -> Self {
        let temperature = match template {
            TemplateName::Proposal | TemplateName::InstructionToTask => PROPOSAL_TEMPERATURE,
            _ => CONFIG_TEMPERATURE,
        };
        ModelRequest {
            template,
            bindings,
            temperature,
            images: Vec::new(),
            seed,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_images(mut self, images: Vec<ImageAttachment>) -> Self {
        self.images = images;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::TemperatureOutOfRange(self.temperature));
        }
        if !self.images.is_empty() && self.template != TemplateName::SceneAnalysis {
            return Err(GatewayError::UnexpectedImages);
        }
        Ok(())
    }

    /// Rendered prompt text for this request.
    pub fn render(&self) -> Result<String, GatewayError> {
        PromptTemplate::get(self.template).render(&self.bindings)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub text: String,
    pub backend: BackendKind,
    pub latency_ms: u64,
}

/// Deterministic stand-in for a live model; installed by the pipeline.
pub trait SyntheticResponder: Send + Sync {
    fn respond(&self, request: &ModelRequest) -> Result<String, GatewayError>;
}

enum Backend {
    Fixture(FixtureStore),
    Synthetic(Arc<dyn SyntheticResponder>),
    Http(http::HttpBackend),
}

/// Shareable model client bound to one backend.
pub struct Gateway {
    backend: Backend,
}

impl Gateway {
    pub fn fixture(store: FixtureStore) -> Gateway {
        Gateway {
            backend: Backend::Fixture(store),
        }
    }

    pub fn synthetic(responder: Arc<dyn SyntheticResponder>) -> Gateway {
        Gateway {
            backend: Backend::Synthetic(responder),
        }
    }

    /// HTTP client from `DEXGEN_MODEL_URL` / `DEXGEN_MODEL_KEY`. This is the
    /// only constructor that can reach the network, and callers must opt in
    /// to it explicitly; nothing in the test suite uses it.
    pub fn http_from_env() -> Result<Gateway, GatewayError> {
        let url = std::env::var(ENV_MODEL_URL)
            .map_err(|_| GatewayError::MissingConfiguration(ENV_MODEL_URL))?;
        let key = std::env::var(ENV_MODEL_KEY)
            .map_err(|_| GatewayError::MissingConfiguration(ENV_MODEL_KEY))?;
        Ok(Gateway {
            backend: Backend::Http(http::HttpBackend::new(url, key)),
        })
    }

    pub fn backend_kind(&self) -> BackendKind {
        match &self.backend {
            Backend::Fixture(_) => BackendKind::Fixture,
            Backend::Synthetic(_) => BackendKind::Synthetic,
            Backend::Http(_) => BackendKind::Http,
        }
    }

    pub fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        request.validate()?;
        let start = Instant::now();
        let (text, backend) = match &self.backend {
            Backend::Fixture(store) => (store.lookup(request)?, BackendKind::Fixture),
            Backend::Synthetic(responder) => (responder.respond(request)?, BackendKind::Synthetic),
            Backend::Http(http) => {
                let prompt = request.render()?;
                (http.complete(&prompt, request)?, BackendKind::Http)
            }
        };
        if text.is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        Ok(ModelResponse {
            text,
            backend,
            latency_ms: start.elapsed().as_millis() as u64,
        })
    }
}

/// Convenience wrapper matching the template library.
pub fn render_prompt(
    template: TemplateName,
    bindings: &BTreeMap<String, String>,
) -> Result<String, GatewayError> {
    PromptTemplate::get(template).render(bindings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temperature_defaults_follow_request_family() {
        let r = ModelRequest::new(TemplateName::Proposal, BTreeMap::new(), 0);
        assert_eq!(r.temperature, 1.2);
        let r = ModelRequest::new(TemplateName::SceneConfig, BTreeMap::new(), 0);
        assert_eq!(r.temperature, 0.3);
    }

    #[test]
    fn images_rejected_outside_scene_analysis() {
        let r = ModelRequest::new(TemplateName::Proposal, BTreeMap::new(), 0).with_images(vec![
            ImageAttachment {
                label: "top".into(),
                bytes: vec![0],
            },
        ]);
        assert!(matches!(
            r.validate(),
            Err(GatewayError::UnexpectedImages)
        ));
    }

    #[test]
    fn http_without_credentials_is_a_configuration_error() {
        std::env::remove_var(ENV_MODEL_URL);
        std::env::remove_var(ENV_MODEL_KEY);
        let err = match Gateway::http_from_env() {
            Err(e) => e,
            Ok(_) => panic!("expected configuration error"),
        };
        assert!(err.to_string().contains(ENV_MODEL_URL));
    }
}
