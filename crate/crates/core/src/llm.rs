//! Chat-completions wire format, sampling configuration, and the offline
//! mock backend. The HTTP transport lives in the `cfexplain-client` crate.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::Error;
use crate::extract::RECORD_KEYS;
use crate::metrics::GroundTruth;
use crate::verbalize::PromptBundle;

/// Sampling and transport settings. The sampling defaults are the values
/// the explanations were generated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub repetition_penalty: f64,
    pub max_output_tokens: u32,
    pub model_name: String,
    pub endpoint_url: Option<String>,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: String,
    pub timeout_seconds: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub retry_base_ms: u64,
    pub max_in_flight: usize,
    /// Keep raw request and response bodies in the run log.
    pub debug_exchanges: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            top_p: 0.8,
            top_k: 30,
            repetition_penalty: 1.05,
            max_output_tokens: 2048,
            model_name: "Qwen2.5-14B-Instruct-GPTQ-Int4".into(),
            endpoint_url: None,
            api_key_env: "CFEXPLAIN_API_KEY".into(),
            timeout_seconds: 120,
            max_retries: 3,
            retry_base_ms: 500,
            max_in_flight: 4,
            debug_exchanges: false,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    /// Message content exactly as received.
    pub raw_text: String,
    pub latency_ms: u64,
    pub model_name_echoed: String,
    pub attempt_count: u32,
    /// Wire bodies of the successful attempt, when debugging is enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange: Option<RawExchange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExchange {
    pub request: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum LlmError {
    #[error("endpoint unavailable after {attempts} attempts: {message}")]
    Endpoint { attempts: u32, message: String },
    #[error("request rejected with HTTP {status}: {body}")]
    Request { status: u16, body: String },
    #[error("response contained no choices")]
    EmptyResponse,
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("undecodable response body: {0}")]
    Decode(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

/// Something that turns a prompt into a response.
pub trait CompletionBackend: Sync {
    fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, LlmError>;

    /// Name recorded in run logs and report rows.
    fn model_name(&self) -> &str;
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
    top_p: f64,
    top_k: u32,
    repetition_penalty: f64,
    max_tokens: u32,
}

/// JSON body for `POST /v1/chat/completions`. Field order is fixed, so the
/// bytes depend only on `(bundle, cfg)`.
pub fn chat_request_body(bundle: &PromptBundle, cfg: &LlmConfig) -> String {
    let req = ChatRequest {
        model: &cfg.model_name,
        messages: [
            ChatMessage {
                role: "system",
                content: &bundle.system_text,
            },
            ChatMessage {
                role: "user",
                content: &bundle.user_text,
            },
        ],
        temperature: cfg.temperature,
        top_p: cfg.top_p,
        top_k: cfg.top_k,
        repetition_penalty: cfg.repetition_penalty,
        max_tokens: cfg.max_output_tokens,
    };
    serde_json::to_string(&req).expect("request serializes")
}

/// `<endpoint_url>/v1/chat/completions`, tolerating a trailing slash.
pub fn chat_completions_url(endpoint_url: &str) -> String {
    format!("{}/v1/chat/completions", endpoint_url.trim_end_matches('/'))
}

/// First choice's message content and the echoed model name.
pub fn parse_chat_response(body: &str) -> Result<(String, String), LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Decode(e.to_string()))?;
    let model = v.get("model").and_then(Value::as_str).unwrap_or_default().to_string();
    let choices = v
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| LlmError::Decode("missing `choices` array".into()))?;
    let first = choices.first().ok_or(LlmError::EmptyResponse)?;
    let content = first
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or(LlmError::EmptyResponse)?;
    Ok((content.to_string(), model))
}

/// One field perturbed with a probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldCorruption {
    pub field: String,
    pub probability: f64,
}

/// Perturbations the mock applies to its otherwise perfect answer. Empty
/// means echo.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    #[serde(default)]
    pub fields: Vec<FieldCorruption>,
}

impl CorruptionSpec {
    pub fn echo() -> Self {
        Self::default()
    }

    pub fn single(field: &str, probability: f64) -> Self {
        Self {
            fields: vec![FieldCorruption {
                field: field.into(),
                probability,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        for f in &self.fields {
            if !RECORD_KEYS.contains(&f.field.as_str()) {
                return Err(Error::UnknownCorruptionField(f.field.clone()));
            }
            if !(0.0..=1.0).contains(&f.probability) {
                return Err(Error::Config(format!(
                    "corruption probability {} for `{}` is not in [0, 1]",
                    f.probability, f.field
                )));
            }
        }
        Ok(())
    }
}

/// Uniform draw in `[0, 1)` fixed by `(seed, prompt hash, field)`.
fn draw(seed: u64, bundle_hash: &str, field: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(bundle_hash.as_bytes());
    h.update(field.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

const HALLUCINATED_WORD: &str = "__unlisted_word__";

fn corrupt(truth: &GroundTruth, field: &str, rec: &mut serde_json::Map<String, Value>) {
    use serde_json::json;
    let ids_without_one = |ids: &std::collections::BTreeSet<u64>| -> Value {
        if ids.is_empty() {
            // nothing to drop: name the target itself, never its own neighbor
            json!([truth.target_node])
        } else {
            json!(ids.iter().skip(1).collect::<Vec<_>>())
        }
    };
    let with_extra_word = |words: &std::collections::BTreeSet<String>| -> Value {
        let mut w: Vec<&str> = words.iter().map(String::as_str).collect();
        w.push(HALLUCINATED_WORD);
        json!(w)
    };
    let value = match field {
        "target_node" => json!(truth.target_node + 1),
        "factual_class" => json!(truth.counterfactual_class),
        "counterfactual_class" => json!(truth.factual_class),
        "factual_neighbors" => ids_without_one(&truth.factual_neighbors),
        "counterfactual_neighbors" => ids_without_one(&truth.counterfactual_neighbors),
        "factual_features" => with_extra_word(&truth.factual_features),
        "counterfactual_features" => with_extra_word(&truth.counterfactual_features),
        _ => return,
    };
    rec.insert(field.into(), value);
}

/// Deterministic offline answer: a short explanation followed by a fenced
/// JSON record equal to the ground truth, with fields perturbed per
/// `corruption`.
pub fn mock_complete(bundle: &PromptBundle, corruption: &CorruptionSpec, seed: u64) -> Result<LlmResponse, Error> {
    corruption.validate()?;
    let truth = &bundle.ground_truth;
    let mut rec = match serde_json::to_value(truth.as_record())? {
        Value::Object(m) => m,
        _ => unreachable!("record serializes to an object"),
    };
    let hash = bundle.hash();
    for fc in &corruption.fields {
        if draw(seed, &hash, &fc.field) < fc.probability {
            corrupt(truth, &fc.field, &mut rec);
        }
    }
    let explanation = format!(
        "In the factual graph the target node {} is classified as {}. After the change shown in \
         the counterfactual graph its class becomes {}, because the evidence that supported the \
         original class is no longer present.",
        truth.target_node, truth.factual_class, truth.counterfactual_class
    );
    let json = serde_json::to_string_pretty(&Value::Object(rec))?;
    Ok(LlmResponse {
        raw_text: format!("{explanation}\n\n```json\n{json}\n```\n"),
        latency_ms: 0,
        model_name_echoed: "mock".into(),
        attempt_count: 1,
        exchange: None,
    })
}

/// [`mock_complete`] as a backend.
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub corruption: CorruptionSpec,
    pub seed: u64,
    pub name: String,
}

impl MockBackend {
    pub fn new(corruption: CorruptionSpec, seed: u64) -> Result<Self, Error> {
        corruption.validate()?;
        Ok(Self {
            corruption,
            seed,
            name: "mock".into(),
        })
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, LlmError> {
        mock_complete(bundle, &self.corruption, self.seed).map_err(|e| LlmError::Config(e.to_string()))
    }

    fn model_name(&self) -> &str {
        &self.name
    }
}
