//! Blocking HTTP backend for OpenAI-compatible `/v1/chat/completions`
//! servers.

use std::time::{Duration, Instant};

use cfexplain_core::llm::{
    chat_completions_url, chat_request_body, parse_chat_response, CompletionBackend, LlmConfig, LlmError,
    LlmResponse, RawExchange,
};
use cfexplain_core::verbalize::PromptBundle;

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    cfg: LlmConfig,
    url: String,
    api_key: Option<String>,
}

enum Attempt {
    Done(Result<String, LlmError>),
    Retry(LlmError),
}

impl HttpBackend {
    /// Reads the bearer token from the variable named by `cfg.api_key_env`;
    /// an unset variable means no `Authorization` header.
    pub fn new(cfg: LlmConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_api_key(cfg, api_key)
    }

    pub fn with_api_key(cfg: LlmConfig, api_key: Option<String>) -> Result<Self, LlmError> {
        let endpoint = cfg
            .endpoint_url
            .as_deref()
            .filter(|u| !u.is_empty())
            .ok_or_else(|| LlmError::Config("endpoint_url is not set".into()))?;
        if cfg.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_seconds.max(1)))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url: chat_completions_url(endpoint),
            cfg,
            api_key,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, body: &str, attempt: u32) -> Attempt {
        let mut req = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout { attempts: attempt }),
            Err(e) => {
                return Attempt::Retry(LlmError::Endpoint {
                    attempts: attempt,
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout { attempts: attempt }),
            Err(e) => {
                return Attempt::Retry(LlmError::Endpoint {
                    attempts: attempt,
                    message: e.to_string(),
                })
            }
        };
        if status.is_server_error() {
            Attempt::Retry(LlmError::Endpoint {
                attempts: attempt,
                message: format!("HTTP {}: {}", status.as_u16(), text),
            })
        } else if !status.is_success() {
            Attempt::Done(Err(LlmError::Request {
                status: status.as_u16(),
                body: text,
            }))
        } else {
            Attempt::Done(Ok(text))
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.cfg.retry_base_ms.saturating_mul(1 << (attempt - 1).min(16)))
    }
}

impl CompletionBackend for HttpBackend {
    /// POSTs the prompt; transport failures, timeouts and 5xx responses are
    /// retried up to `max_retries` times with exponential backoff.
    fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, LlmError> {
        let body = chat_request_body(bundle, &self.cfg);
        let start = Instant::now();
        let mut attempt = 1;
        loop {
            match self.attempt(&body, attempt) {
                Attempt::Done(Ok(text)) => {
                    let (raw_text, model_name_echoed) = parse_chat_response(&text)?;
                    return Ok(LlmResponse {
                        raw_text,
                        latency_ms: start.elapsed().as_millis() as u64,
                        model_name_echoed,
                        attempt_count: attempt,
                        exchange: self.cfg.debug_exchanges.then(|| RawExchange {
                            request: body.clone(),
                            response: text,
                        }),
                    });
                }
                Attempt::Done(Err(e)) => return Err(e),
                Attempt::Retry(e) => {
                    if attempt > self.cfg.max_retries {
                        return Err(e);
                    }
                    log::warn!("attempt {attempt} failed ({e}); retrying");
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
            }
        }
    }

    fn model_name(&self) -> &str {
        &self.cfg.model_name
    }
}
