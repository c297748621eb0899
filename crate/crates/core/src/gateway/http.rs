//! Chat-completions-style HTTP transport.
//!
//! Only constructed via `Gateway::http_from_env`; nothing else in the
//! workspace reaches the network.

use serde::{Deserialize, Serialize};

use super::{GatewayError, ModelRequest};

const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug)]
pub struct HttpBackend {
    url: String,
    key: String,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    seed: u64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: Vec<ContentPart<'a>>,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ContentPart<'a> {
    Text { text: &'a str },
    Image { label: &'a str, data_base64: String },
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: String,
}

fn base64(bytes: &[u8]) -> String {
    const TABLE: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    let mut out = String::with_capacity(bytes.len().div_ceil(3) * 4);
    for chunk in bytes.chunks(3) {
        let b = [
            chunk[0],
            chunk.get(1).copied().unwrap_or(0),
            chunk.get(2).copied().unwrap_or(0),
        ];
        let n = ((b[0] as u32) << 16) | ((b[1] as u32) << 8) | b[2] as u32;
        out.push(TABLE[(n >> 18) as usize & 63] as char);
        out.push(TABLE[(n >> 12) as usize & 63] as char);
        out.push(if chunk.len() > 1 {
            TABLE[(n >> 6) as usize & 63] as char
        } else {
            '='
        });
        out.push(if chunk.len() > 2 {
            TABLE[n as usize & 63] as char
        } else {
            '='
        });
    }
    out
}

impl HttpBackend {
    pub fn new(url: String, key: String) -> Self {
        HttpBackend { url, key }
    }

    pub fn complete(&self, prompt: &str, request: &ModelRequest) -> Result<String, GatewayError> {
        let mut content = vec![ContentPart::Text { text: prompt }];
        for image in &request.images {
            content.push(ContentPart::Image {
                label: &image.label,
                data_base64: base64(&image.bytes),
            });
        }
        let body = ChatRequest {
            messages: vec![ChatMessage {
                role: "user",
                content,
            }],
            temperature: request.temperature,
            seed: request.seed,
        };

        let mut last_err = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            match ureq::post(&self.url)
                .header("authorization", &format!("Bearer {}", self.key))
                .send_json(&body)
            {
                Ok(mut resp) => {
                    let parsed: ChatResponse = resp
                        .body_mut()
                        .read_json()
                        .map_err(|e| GatewayError::HttpMalformed(e.to_string()))?;
                    let text = parsed
                        .choices
                        .into_iter()
                        .next()
                        .map(|c| c.message.content)
                        .ok_or_else(|| GatewayError::HttpMalformed("no choices".into()))?;
                    return Ok(text);
                }
                Err(e) => {
                    last_err = e.to_string();
                    if attempt < MAX_ATTEMPTS {
                        continue;
                    }
                }
            }
        }
        Err(GatewayError::HttpTransport {
            attempts: MAX_ATTEMPTS,
            detail: last_err,
        })
    }
}
