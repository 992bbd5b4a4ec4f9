//! Generation backends and the chat-completions / completions wire shapes.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which endpoint family a backend speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiStyle {
    /// `POST {endpoint}/chat/completions` with a `messages` array. The server
    /// applies its own chat template.
    Chat,
    /// `POST {endpoint}/completions` with a raw `prompt` rendered client-side.
    Completion,
}

fn default_max_new_tokens() -> u32 {
    2048
}
fn default_max_parallel() -> usize {
    4
}
fn default_retry_limit() -> u32 {
    3
}
fn default_retry_backoff_ms() -> u64 {
    250
}
fn default_timeout_secs() -> u64 {
    600
}

/// Connection and decoding settings for one backend. Defaults give greedy
/// decoding (temperature 0) with up to 2,048 new tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Base URL including the API version prefix, e.g. `http://127.0.0.1:8000/v1`.
    pub endpoint_url: String,
    pub api_style: ApiStyle,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    /// Bearer token. Prefer `auth_token_env` in config files.
    #[serde(default, skip_serializing)]
    pub auth_token: Option<String>,
    /// Name of an environment variable holding the bearer token.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    /// Extra attempts after the first failure.
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_retry_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Chat servers that can continue a trailing assistant message
    /// (`continue_final_message`). Completion backends always can.
    #[serde(default)]
    pub assistant_prefill: bool,
}

impl BackendConfig {
    pub fn new(endpoint_url: impl Into<String>, api_style: ApiStyle, model_name: impl Into<String>) -> Self {
        BackendConfig {
            endpoint_url: endpoint_url.into(),
            api_style,
            model_name: model_name.into(),
            temperature: 0.0,
            max_new_tokens: default_max_new_tokens(),
            auth_token: None,
            auth_token_env: None,
            max_parallel: default_max_parallel(),
            retry_limit: default_retry_limit(),
            retry_backoff_ms: default_retry_backoff_ms(),
            timeout_secs: default_timeout_secs(),
            assistant_prefill: false,
        }
    }

    pub fn from_toml_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("backend config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be positive".into());
        }
        if self.max_parallel == 0 {
            return bad("max_parallel must be at least 1".into());
        }
        match reqwest::Url::parse(&self.endpoint_url) {
            Ok(url) if matches!(url.scheme(), "http" | "https") && url.host().is_some() => Ok(()),
            _ => bad(format!("invalid endpoint url {:?}", self.endpoint_url)),
        }
    }

    fn resolved_token(&self) -> Option<String> {
        self.auth_token
            .clone()
            .or_else(|| self.auth_token_env.as_ref().and_then(|var| std::env::var(var).ok()))
    }

    pub fn limits(&self) -> RunLimits {
        RunLimits {
            max_parallel: self.max_parallel,
            retry_limit: self.retry_limit,
            retry_backoff: Duration::from_millis(self.retry_backoff_ms),
        }
    }
}

/// Concurrency and retry policy applied by the orchestrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunLimits {
    pub max_parallel: usize,
    pub retry_limit: u32,
    pub retry_backoff: Duration,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits {
            max_parallel: 1,
            retry_limit: 0,
            retry_backoff: Duration::from_millis(0),
        }
    }
}

/// One generation call. `prompt` is the full client-side rendering (chat
/// template plus any assistant prefix); `instruction` and `assistant_prefix`
/// are its parts, for servers that template on their side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub instruction: String,
    pub assistant_prefix: String,
}

#[async_trait]
pub trait Backend: Send + Sync {
    /// Whether generation can continue from a supplied assistant prefix.
    fn supports_prefill(&self) -> bool;

    fn limits(&self) -> RunLimits;

    /// Returns the generated continuation only, never the prompt or prefix.
    async fn generate(&self, request: &GenerationRequest) -> Result<String>;
}

pub mod wire {
    //! JSON bodies for `/chat/completions` and `/completions`.

    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ChatMessage {
        pub role: String,
        pub content: String,
    }

    impl ChatMessage {
        pub fn new(role: &str, content: impl Into<String>) -> Self {
            ChatMessage {
                role: role.to_string(),
                content: content.into(),
            }
        }
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ChatCompletionRequest {
        pub model: String,
        pub messages: Vec<ChatMessage>,
        #[serde(default)]
        pub temperature: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub max_tokens: Option<u32>,
        /// Continue the trailing assistant message instead of opening a new one.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub continue_final_message: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub add_generation_prompt: Option<bool>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CompletionRequest {
        pub model: String,
        pub prompt: String,
        #[serde(default)]
        pub temperature: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub max_tokens: Option<u32>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ChatChoice {
        pub index: u32,
        pub message: ChatMessage,
        #[serde(default)]
        pub finish_reason: Option<String>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CompletionChoice {
        pub index: u32,
        pub text: String,
        #[serde(default)]
        pub finish_reason: Option<String>,
    }

    /// Extra block the mock server attaches; real servers omit it.
    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct MockMetadata {
        pub profile: String,
        pub words: usize,
        /// The prompt could not be interpreted and a fixed reply was sent.
        pub fallback: bool,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ChatCompletionResponse {
        pub id: String,
        pub object: String,
        pub model: String,
        pub choices: Vec<ChatChoice>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub mock: Option<MockMetadata>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CompletionResponse {
        pub id: String,
        pub object: String,
        pub model: String,
        pub choices: Vec<CompletionChoice>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub mock: Option<MockMetadata>,
    }

    #[derive(Debug, Clone, PartialEq)]
    pub enum WireRequest {
        Chat(ChatCompletionRequest),
        Completion(CompletionRequest),
    }

    #[derive(Debug, Clone, PartialEq)]
    pub enum WireResponse {
        Chat(ChatCompletionResponse),
        Completion(CompletionResponse),
    }

    impl WireResponse {
        /// Text of the first choice.
        pub fn text(&self) -> Option<&str> {
            match self {
                WireResponse::Chat(r) => r.choices.first().map(|c| c.message.content.as_str()),
                WireResponse::Completion(r) => r.choices.first().map(|c| c.text.as_str()),
            }
        }

        pub fn mock(&self) -> Option<&MockMetadata> {
            match self {
                WireResponse::Chat(r) => r.mock.as_ref(),
                WireResponse::Completion(r) => r.mock.as_ref(),
            }
        }
    }
}

use wire::{ChatCompletionRequest, ChatMessage, CompletionRequest, WireRequest};

/// Builds the request body a backend of `config`'s style would send.
pub fn build_wire_request(config: &BackendConfig, request: &GenerationRequest) -> WireRequest {
    let max_tokens = Some(config.max_new_tokens);
    match config.api_style {
        ApiStyle::Completion => WireRequest::Completion(CompletionRequest {
            model: config.model_name.clone(),
            prompt: request.prompt.clone(),
            temperature: config.temperature,
            max_tokens,
        }),
        ApiStyle::Chat => {
            let mut messages = vec![ChatMessage::new("user", request.instruction.clone())];
            let prefill = !request.assistant_prefix.is_empty();
            if prefill {
                messages.push(ChatMessage::new("assistant", request.assistant_prefix.clone()));
            }
            WireRequest::Chat(ChatCompletionRequest {
                model: config.model_name.clone(),
                messages,
                temperature: config.temperature,
                max_tokens,
                continue_final_message: prefill.then_some(true),
                add_generation_prompt: prefill.then_some(false),
            })
        }
    }
}

/// HTTP client for chat-completions and completions servers.
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::Client,
    token: Option<String>,
}

impl HttpBackend {
    /// Validates the config; a malformed endpoint is an error here, before any run starts.
    pub fn new(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("http client: {e}")))?;
        let token = config.resolved_token();
        Ok(HttpBackend { config, client, token })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.config.endpoint_url.trim_end_matches('/'))
    }

    async fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R> {
        let mut req = self.client.post(self.url(path)).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(|e| Error::Backend(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            let snippet: String = body.chars().take(200).collect();
            return Err(Error::Backend(format!("HTTP {status}: {snippet}")));
        }
        resp.json::<R>().await.map_err(|e| Error::Backend(format!("bad response body: {e}")))
    }
}

#[async_trait]
impl Backend for HttpBackend {
    fn supports_prefill(&self) -> bool {
        match self.config.api_style {
            ApiStyle::Completion => true,
            ApiStyle::Chat => self.config.assistant_prefill,
        }
    }

    fn limits(&self) -> RunLimits {
        self.config.limits()
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String> {
        let text = match build_wire_request(&self.config, request) {
            WireRequest::Chat(body) => {
                let resp: wire::ChatCompletionResponse = self.post("chat/completions", &body).await?;
                resp.choices.into_iter().next().map(|c| c.message.content)
            }
            WireRequest::Completion(body) => {
                let resp: wire::CompletionResponse = self.post("completions", &body).await?;
                resp.choices.into_iter().next().map(|c| c.text)
            }
        };
        text.ok_or_else(|| Error::Backend("response has no choices".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(prefix: &str) -> GenerationRequest {
        GenerationRequest {
            prompt: format!("<s>[INST] Hi [/INST]{prefix}"),
            instruction: "Hi".into(),
            assistant_prefix: prefix.into(),
        }
    }

    #[test]
    fn defaults_are_greedy() {
        let cfg: BackendConfig = toml::from_str(
            "endpoint_url = \"http://localhost:8000/v1\"\napi_style = \"completion\"\nmodel_name = \"m\"\n",
        )
        .unwrap();
        assert_eq!(cfg.temperature, 0.0);
        assert_eq!(cfg.max_new_tokens, 2048);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = BackendConfig::new("not a url", ApiStyle::Chat, "m");
        assert!(matches!(HttpBackend::new(cfg.clone()), Err(Error::InvalidConfig(_))));
        cfg.endpoint_url = "ftp://host/v1".into();
        assert!(cfg.validate().is_err());
        cfg.endpoint_url = "http://host/v1".into();
        cfg.max_parallel = 0;
        assert!(cfg.validate().is_err());
        cfg.max_parallel = 1;
        cfg.temperature = -0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn completion_body_uses_rendered_prompt() {
        let cfg = BackendConfig::new("http://h/v1", ApiStyle::Completion, "m");
        let WireRequest::Completion(body) = build_wire_request(&cfg, &request("[MLT:50]")) else {
            panic!("expected completion");
        };
        assert_eq!(body.prompt, "<s>[INST] Hi [/INST][MLT:50]");
        let json = serde_json::to_value(&body).unwrap();
        assert_eq!(json["max_tokens"], 2048);
        assert_eq!(json["temperature"], 0.0);
    }

    #[test]
    fn chat_body_prefills_assistant() {
        let cfg = BackendConfig::new("http://h/v1", ApiStyle::Chat, "m");
        let WireRequest::Chat(body) = build_wire_request(&cfg, &request("[MLT:50]")) else {
            panic!("expected chat");
        };
        assert_eq!(body.messages.len(), 2);
        assert_eq!(body.messages[1], ChatMessage::new("assistant", "[MLT:50]"));
        assert_eq!(body.continue_final_message, Some(true));

        let WireRequest::Chat(body) = build_wire_request(&cfg, &request("")) else {
            panic!("expected chat");
        };
        assert_eq!(body.messages, vec![ChatMessage::new("user", "Hi")]);
        let json = serde_json::to_string(&body).unwrap();
        assert!(!json.contains("continue_final_message"));
    }

    #[test]
    fn prefill_capability() {
        let mut cfg = BackendConfig::new("http://h/v1", ApiStyle::Chat, "m");
        assert!(!HttpBackend::new(cfg.clone()).unwrap().supports_prefill());
        cfg.assistant_prefill = true;
        assert!(HttpBackend::new(cfg.clone()).unwrap().supports_prefill());
        cfg.api_style = ApiStyle::Completion;
        cfg.assistant_prefill = false;
        assert!(HttpBackend::new(cfg).unwrap().supports_prefill());
    }

    #[test]
    fn token_from_env() {
        let mut cfg = BackendConfig::new("http://h/v1", ApiStyle::Chat, "m");
        cfg.auth_token_env = Some("TLGKIT_TEST_TOKEN_UNSET_VAR".into());
        assert_eq!(cfg.resolved_token(), None);
        cfg.auth_token = Some("secret".into());
        assert_eq!(cfg.resolved_token().as_deref(), Some("secret"));
        assert!(!toml::to_string(&cfg).unwrap().contains("secret"));
    }
}
