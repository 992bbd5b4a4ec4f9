//! Deterministic stand-in for a generation server.
//!
//! The mock reads the length the prompt asks for and answers with exactly
//! that many filler words (or a configured distortion of it), so the whole
//! pipeline can be checked against closed-form PM/FM predictions.

use std::fmt;
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::Arc;

use async_trait::async_trait;
use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::backend::wire::{
    ChatChoice, ChatCompletionRequest, ChatCompletionResponse, ChatMessage, CompletionChoice, CompletionRequest,
    CompletionResponse, MockMetadata, WireRequest, WireResponse,
};
use crate::backend::{build_wire_request, ApiStyle, Backend, BackendConfig, GenerationRequest, RunLimits};
use crate::error::{Error, Result};
use crate::length::{MetaLengthToken, TargetLength};

/// Words emitted when a prompt asks for "more than 800".
pub const OVER_800_WORDS: usize = 850;
/// Words emitted when the prompt cannot be interpreted.
pub const FALLBACK_WORDS: usize = 30;
/// Words emitted by the `NoMlt` profile.
pub const NO_MLT_WORDS: usize = 25;

const FILLER: [&str; 64] = [
    "river", "stone", "maple", "cloud", "lantern", "harbor", "meadow", "copper", "willow", "signal", "orbit",
    "canvas", "ember", "falcon", "garden", "helmet", "island", "jacket", "kettle", "ladder", "marble", "needle",
    "oyster", "pepper", "quartz", "ribbon", "saddle", "timber", "umbrella", "velvet", "wagon", "yonder", "zephyr",
    "anchor", "basket", "candle", "dagger", "engine", "fabric", "goblet", "hammer", "icicle", "jigsaw", "kernel",
    "locket", "mirror", "nectar", "object", "pillow", "quiver", "rocket", "silver", "tunnel", "uplink", "valley",
    "window", "yogurt", "zipper", "acorn", "bridge", "cactus", "dolphin", "easel", "fossil",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MockBehavior {
    /// Answers "word count of X words" with exactly X words.
    Exact,
    /// Answers with X + offset words, floored at zero.
    Offset { offset: i64 },
    /// Reads a token at the very end of the prompt and answers with its center.
    MltAware,
    /// Opens every reply with `fixed_mlt` followed by its center-many words.
    SelfMlt { fixed_mlt: MetaLengthToken },
    /// A fixed 25-word reply with no token.
    NoMlt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockProfile {
    #[serde(flatten)]
    pub behavior: MockBehavior,
    #[serde(default)]
    pub seed: u64,
}

impl MockProfile {
    pub fn new(behavior: MockBehavior) -> Self {
        MockProfile { behavior, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_toml_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("mock profile: {e}")))
    }

    fn name(&self) -> &'static str {
        match self.behavior {
            MockBehavior::Exact => "EXACT",
            MockBehavior::Offset { .. } => "OFFSET",
            MockBehavior::MltAware => "MLT_AWARE",
            MockBehavior::SelfMlt { .. } => "SELF_MLT",
            MockBehavior::NoMlt => "NO_MLT",
        }
    }
}

impl fmt::Display for MockProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.behavior {
            MockBehavior::Exact => f.write_str("exact"),
            MockBehavior::Offset { offset } => write!(f, "offset:{offset}"),
            MockBehavior::MltAware => f.write_str("mlt-aware"),
            MockBehavior::SelfMlt { fixed_mlt } => write!(f, "self-mlt:{}", fixed_mlt.target()),
            MockBehavior::NoMlt => f.write_str("no-mlt"),
        }
    }
}

/// Parses `exact`, `offset:<k>`, `mlt-aware`, `self-mlt:<target>` or `no-mlt`.
impl FromStr for MockProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown mock profile {s:?}"));
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let behavior = match (kind.to_ascii_lowercase().replace('_', "-").as_str(), arg) {
            ("exact", None) => MockBehavior::Exact,
            ("offset", Some(a)) => MockBehavior::Offset {
                offset: a.parse().map_err(|_| bad())?,
            },
            ("mlt-aware", None) => MockBehavior::MltAware,
            ("self-mlt", Some(a)) => MockBehavior::SelfMlt {
                fixed_mlt: a.parse::<TargetLength>()?.mlt(),
            },
            ("no-mlt", None) => MockBehavior::NoMlt,
            _ => return Err(bad()),
        };
        Ok(MockProfile::new(behavior))
    }
}

fn filler(words: usize, seed: u64) -> String {
    let start = (seed % FILLER.len() as u64) as usize;
    let mut out = String::with_capacity(words * 8);
    for i in 0..words {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(FILLER[(start + i) % FILLER.len()]);
    }
    out
}

fn token_words(token: MetaLengthToken) -> usize {
    token.target().center().map_or(OVER_800_WORDS, |c| c as usize)
}

/// The length asked for by the last "word count of {X} words" phrase.
fn requested_words(prompt: &str) -> Option<usize> {
    const MARKER: &str = "word count of ";
    let start = prompt.rfind(MARKER)? + MARKER.len();
    let rest = &prompt[start..];
    if rest.starts_with("more than 800 words") {
        return Some(OVER_800_WORDS);
    }
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() || !rest[digits.len()..].starts_with(" words") {
        return None;
    }
    digits.parse().ok()
}

fn trailing_token(prompt: &str) -> Option<MetaLengthToken> {
    let trimmed = prompt.trim_end();
    MetaLengthToken::ALL
        .into_iter()
        .find(|t| trimmed.ends_with(t.surface()))
}

/// Text a mock reply is computed from: the raw prompt, or for chat requests
/// the message contents joined with newlines.
fn prompt_view(request: &WireRequest) -> String {
    match request {
        WireRequest::Completion(r) => r.prompt.clone(),
        WireRequest::Chat(r) => r
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

/// Computes the reply text and its metadata for one prompt.
pub fn reply_for_prompt(profile: &MockProfile, prompt: &str) -> (String, MockMetadata) {
    let fallback = |profile: &MockProfile| {
        (
            filler(FALLBACK_WORDS, profile.seed),
            MockMetadata {
                profile: profile.name().into(),
                words: FALLBACK_WORDS,
                fallback: true,
            },
        )
    };
    let plain = |words: usize| {
        (
            filler(words, profile.seed),
            MockMetadata {
                profile: profile.name().into(),
                words,
                fallback: false,
            },
        )
    };
    match profile.behavior {
        MockBehavior::Exact => match requested_words(prompt) {
            Some(words) => plain(words),
            None => fallback(profile),
        },
        MockBehavior::Offset { offset } => match requested_words(prompt) {
            Some(words) => plain((words as i64 + offset).max(0) as usize),
            None => fallback(profile),
        },
        MockBehavior::MltAware => match trailing_token(prompt) {
            Some(token) => plain(token_words(token)),
            None => fallback(profile),
        },
        MockBehavior::SelfMlt { fixed_mlt } => {
            let words = token_words(fixed_mlt);
            let (body, meta) = plain(words);
            (format!("{} {body}", fixed_mlt.surface()), meta)
        }
        MockBehavior::NoMlt => plain(NO_MLT_WORDS),
    }
}

/// Answers one wire request. Identical inputs give identical responses.
pub fn respond(profile: &MockProfile, request: &WireRequest) -> WireResponse {
    let (text, meta) = reply_for_prompt(profile, &prompt_view(request));
    match request {
        WireRequest::Chat(r) => WireResponse::Chat(ChatCompletionResponse {
            id: "mock-chatcmpl".into(),
            object: "chat.completion".into(),
            model: r.model.clone(),
            choices: vec![ChatChoice {
                index: 0,
                message: ChatMessage::new("assistant", text),
                finish_reason: Some("stop".into()),
            }],
            mock: Some(meta),
        }),
        WireRequest::Completion(r) => WireResponse::Completion(CompletionResponse {
            id: "mock-cmpl".into(),
            object: "text_completion".into(),
            model: r.model.clone(),
            choices: vec![CompletionChoice {
                index: 0,
                text,
                finish_reason: Some("stop".into()),
            }],
            mock: Some(meta),
        }),
    }
}

async fn chat_handler(
    State(profile): State<Arc<MockProfile>>,
    Json(body): Json<ChatCompletionRequest>,
) -> Json<ChatCompletionResponse> {
    match respond(&profile, &WireRequest::Chat(body)) {
        WireResponse::Chat(r) => Json(r),
        WireResponse::Completion(_) => unreachable!("chat request yields chat response"),
    }
}

async fn completion_handler(
    State(profile): State<Arc<MockProfile>>,
    Json(body): Json<CompletionRequest>,
) -> Json<CompletionResponse> {
    match respond(&profile, &WireRequest::Completion(body)) {
        WireResponse::Completion(r) => Json(r),
        WireResponse::Chat(_) => unreachable!("completion request yields completion response"),
    }
}

pub fn router(profile: MockProfile) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/v1/chat/completions", post(chat_handler))
        .route("/v1/completions", post(completion_handler))
        .with_state(Arc::new(profile))
}

/// A running mock server. Dropping the handle without calling
/// [`MockServer::shutdown`] leaves the server running until the runtime stops.
pub struct MockServer {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to put in [`BackendConfig::endpoint_url`].
    pub fn endpoint_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn health_url(&self) -> String {
        format!("http://{}/health", self.addr)
    }

    /// Backend config pointing at this server.
    pub fn backend_config(&self, api_style: ApiStyle) -> BackendConfig {
        let mut cfg = BackendConfig::new(self.endpoint_url(), api_style, "mock");
        cfg.assistant_prefill = true;
        cfg.retry_backoff_ms = 10;
        cfg
    }

    /// Stops accepting connections, drains in-flight requests and releases the port.
    pub async fn shutdown(mut self) -> Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match (&mut self.task).await {
            Ok(res) => res.map_err(Error::Io),
            Err(e) => Err(Error::Io(std::io::Error::other(e))),
        }
    }
}

/// Binds `addr` and serves the mock protocol in the background.
pub async fn serve(profile: MockProfile, addr: impl Into<SocketAddr>) -> Result<MockServer> {
    let addr = addr.into();
    let listener = TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => Error::AddressInUse(addr.to_string()),
        _ => Error::Io(e),
    })?;
    let local = listener.local_addr()?;
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, router(profile))
            .with_graceful_shutdown(async {
                let _ = stop_rx.await;
            })
            .await
    });
    tracing::info!(%local, %profile, "mock backend listening");
    Ok(MockServer {
        addr: local,
        stop: Some(stop_tx),
        task,
    })
}

/// In-process backend that answers through [`respond`] without any network.
pub struct MockBackend {
    profile: MockProfile,
    config: BackendConfig,
}

impl MockBackend {
    pub fn new(profile: MockProfile, api_style: ApiStyle) -> Self {
        let mut config = BackendConfig::new("http://mock.invalid/v1", api_style, "mock");
        config.assistant_prefill = true;
        MockBackend { profile, config }
    }
}

#[async_trait]
impl Backend for MockBackend {
    fn supports_prefill(&self) -> bool {
        true
    }

    fn limits(&self) -> RunLimits {
        RunLimits::default()
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String> {
        let wire = build_wire_request(&self.config, request);
        respond(&self.profile, &wire)
            .text()
            .map(str::to_string)
            .ok_or_else(|| Error::Backend("mock produced no choices".into()))
    }
}
