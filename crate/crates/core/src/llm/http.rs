//! Chat-completion and embedding endpoints over plain HTTP.

use std::thread;
use std::time::Duration;

use reqwest::blocking::{Client, RequestBuilder};
use serde::{Deserialize, Serialize};

use super::{GenerationRequest, GenerationResponse, Generator, LlmError, Usage};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "DOCREL_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            retries: 3,
            backoff: Duration::from_secs(1),
            timeout: Duration::from_secs(300),
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop: Option<&'a [String]>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub(crate) struct HttpTransport {
    client: Client,
    config: HttpConfig,
}

impl HttpTransport {
    pub(crate) fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        Ok(Self { client, config })
    }

    pub(crate) fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url, path)
    }

    /// Posts JSON and returns the decoded body. Network errors and 5xx are
    /// retried with exponential backoff; 4xx is returned immediately.
    pub(crate) fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, LlmError> {
        let url = self.url(path);
        let mut delay = self.config.backoff;
        let mut last_error = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            let mut request: RequestBuilder = self.client.post(&url).json(body);
            if let Some(key) = &self.config.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Err(e) => last_error = e.to_string(),
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp
                            .json::<R>()
                            .map_err(|e| LlmError::MalformedResponse(e.to_string()));
                    }
                    let body = resp.text().unwrap_or_default();
                    if status.is_server_error() {
                        last_error = format!("HTTP {status}: {body}");
                    } else {
                        return Err(LlmError::HttpStatus {
                            status: status.as_u16(),
                            body,
                        });
                    }
                }
            }
            log::warn!("POST {url} attempt {} failed: {last_error}", attempt + 1);
        }
        Err(LlmError::BackendUnavailable(format!(
            "{url} after {} attempts: {last_error}",
            self.config.retries + 1
        )))
    }
}

/// Generation over an OpenAI-style `/chat/completions` endpoint.
pub struct HttpBackend {
    transport: HttpTransport,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        Ok(Self {
            transport: HttpTransport::new(config)?,
        })
    }
}

impl Generator for HttpBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        req.validate()?;
        let body = ChatRequest {
            model: &req.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &req.prompt_text,
            }],
            temperature: req.temperature,
            max_tokens: req.max_new_tokens,
            seed: req.seed,
            stop: req.stop.as_deref(),
        };
        let resp: ChatResponse = self.transport.post_json("chat/completions", &body)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::MalformedResponse("response has no choices".into()))?
            .message
            .content
            .unwrap_or_default();
        let usage = match resp.usage {
            Some(u) => Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            },
            None => Usage::estimate(&req.prompt_text, &text),
        };
        Ok(GenerationResponse {
            text,
            usage,
            backend_id: self.backend_id(),
            cached: false,
        })
    }

    fn backend_id(&self) -> String {
        format!("http:{}", self.transport.config.base_url)
    }
}
