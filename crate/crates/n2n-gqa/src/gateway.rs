//! Single boundary for all language-model interaction.
//!
//! Prompt templates live here so every stage of the pipeline renders its
//! requests through one place, and a scripted mock backend makes the whole
//! pipeline reproducible offline: rules are matched by substring against
//! the rendered user message, first match wins.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("missing prompt slot {0:?}")]
    MissingSlot(String),
    #[error("transport failure after retries: {0}")]
    Transport(String),
    #[error("structured response is not valid JSON: {raw:?}")]
    Schema { raw: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    /// JSON schema descriptor when a structured (JSON object) reply is required.
    pub structured_schema: Option<String>,
    pub temperature: f64,
    pub max_tokens: usize,
}

impl ChatRequest {
    fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            system: system.into(),
            user: user.into(),
            structured_schema: None,
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    PlanGeneration,
    EntityExtraction,
    AnswerSynthesis,
}

const PLAN_SYSTEM: &str = "You are an expert query planner. Your task is to analyze a user's question and create a multi-hop reasoning plan to answer it. Use the `create_query_plan` tool to structure your response.

IMPORTANT GUIDELINES FOR HOP CLASSIFICATION:

- 1-hop: Simple factual questions that can be answered directly. Examples: \"Who is the CEO of Apple?\", \"What is the capital of France?\"
- 2-hop: Questions requiring an intermediate step. Examples: \"Which NHL team has the Player of the Year of Atlantic Hockey for the season ending in 2019 signed a agreement with ?\", \"What goods did the politician elected to the 6th Legislature in Brandon East trade in ?\",\"What is the city associated with the baseball minor league affiliate that is based in Anaheim ?\"
- 3-hop: Complex questions needing two intermediate steps. Examples: \"Which Primera B Nacional team finished second in the year the club founded on 21 January 1896 finished third ?\", \"Which of the women 's wheelchair Marathon winners in Boston with a first name beginning with 'S ' comes from the 8th most extensive US state ?\", \"What is the capital of the country whose inductee into the Magic: The Gathering Hall of Fame now writes for Bluff Magazine?\"

IMPORTANT: Be conservative with 3-hop classifications! Most questions only need 1 or 2 hops.";

const PLAN_USER: &str = "Here is the question: {question}";

const EXTRACTION_USER: &str = "Based on the following context, answer the specific question.
Respond with only the entity name and nothing else.

Context: \"{context}\"

Question: \"{primary_query}\"

Answer:";

const SYNTHESIS_SYSTEM: &str = "You are a helpful assistant that synthesizes direct answers based on a main question, a reasoning path, and a context. You only give the exact answers and do not provide explanations. If the context is not sufficient, respond with 'Not enough Context'.";

const SYNTHESIS_USER: &str = "You are an expert Q&A assistant. Synthesize a final, direct answer to the Main Question by following the Reasoning Path and using only the provided Context.

**Reasoning Path:**
{reasoning_path}

**Context:**
{context}

**Main Question:**
{question}


Based on all the information above, provide a precise and direct answer to the **Main Question**.
If the context does not contain enough information, respond with 'Not enough Context'.
If the question is a 'how many' question, respond with only the number.";

/// JSON schema the plan generation request asks the model to emit.
pub const PLAN_SCHEMA: &str = r#"{"type":"object","properties":{"hops":{"type":"integer","enum":[1,2,3]},"initial_query":{"type":"string"},"expected_entity_type":{"type":"string"},"alternatives":{"type":"array","items":{"type":"string"}},"step_templates":{"type":"array","items":{"type":"string"}}},"required":["hops","initial_query","expected_entity_type","alternatives","step_templates"]}"#;

fn fill(template: &str, slots: &BTreeMap<String, String>, required: &[&str]) -> Result<String, GatewayError> {
    let mut out = template.to_string();
    for name in required {
        let value = slots
            .get(*name)
            .ok_or_else(|| GatewayError::MissingSlot(name.to_string()))?;
        out = out.replace(&format!("{{{name}}}"), value);
    }
    Ok(out)
}

/// Render one of the pipeline prompts with its named slots filled in.
pub fn render_prompt(
    kind: PromptKind,
    slots: &BTreeMap<String, String>,
) -> Result<ChatRequest, GatewayError> {
    match kind {
        PromptKind::PlanGeneration => {
            let user = fill(PLAN_USER, slots, &["question"])?;
            let mut req = ChatRequest::new(PLAN_SYSTEM, user);
            req.structured_schema = Some(PLAN_SCHEMA.to_string());
            Ok(req)
        }
        PromptKind::EntityExtraction => {
            let user = fill(EXTRACTION_USER, slots, &["context", "primary_query"])?;
            Ok(ChatRequest::new("", user))
        }
        PromptKind::AnswerSynthesis => {
            let user = fill(SYNTHESIS_USER, slots, &["reasoning_path", "context", "question"])?;
            Ok(ChatRequest::new(SYNTHESIS_SYSTEM, user))
        }
    }
}

pub trait Backend: Send + Sync {
    /// One attempt; transport failures are retried by [`complete`].
    fn send(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

/// Retry policy for transient transport failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub retries: usize,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 2,
            base_delay: Duration::from_millis(250),
        }
    }
}

/// Send a request, retrying transient transport failures with exponential
/// backoff. Structured requests are checked to parse as JSON; a parse
/// failure surfaces as a schema error carrying the raw text.
pub fn complete(
    request: &ChatRequest,
    backend: &dyn Backend,
    policy: RetryPolicy,
) -> Result<String, GatewayError> {
    let mut delay = policy.base_delay;
    let mut attempt = 0;
    let text = loop {
        match backend.send(request) {
            Ok(text) => break text,
            Err(GatewayError::Transport(msg)) if attempt < policy.retries => {
                log::warn!("transport failure (attempt {}): {msg}", attempt + 1);
                std::thread::sleep(delay);
                delay *= 2;
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    };
    if request.structured_schema.is_some() && serde_json::from_str::<serde_json::Value>(&text).is_err()
    {
        return Err(GatewayError::Schema { raw: text });
    }
    Ok(text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    /// Substring matched against the rendered user message.
    pub pattern: String,
    pub response: String,
}

/// Deterministic scripted backend: first rule whose pattern occurs in the
/// user text wins; no match falls through to the default response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedMock {
    pub rules: Vec<MockRule>,
    #[serde(default = "default_mock_response")]
    pub default: String,
}

fn default_mock_response() -> String {
    "Not enough Context".to_string()
}

impl ScriptedMock {
    pub fn new(rules: Vec<(impl Into<String>, impl Into<String>)>) -> Self {
        ScriptedMock {
            rules: rules
                .into_iter()
                .map(|(pattern, response)| MockRule {
                    pattern: pattern.into(),
                    response: response.into(),
                })
                .collect(),
            default: default_mock_response(),
        }
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Transport(e.to_string()))
    }
}

impl Backend for ScriptedMock {
    fn send(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        for rule in &self.rules {
            if request.user.contains(&rule.pattern) {
                return Ok(rule.response.clone());
            }
        }
        Ok(self.default.clone())
    }
}

/// Settings for the JSON-over-HTTP chat-completion backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_inflight() -> usize {
    4
}

/// Chat-completion client speaking the widely deployed
/// `POST /v1/chat/completions` protocol.
pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let api_key = config
            .api_key_env
            .as_ref()
            .and_then(|var| std::env::var(var).ok());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .expect("client construction cannot fail with static options");
        HttpBackend {
            config,
            api_key,
            client,
        }
    }
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl Backend for HttpBackend {
    fn send(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(serde_json::json!({"role": "system", "content": request.system}));
        }
        messages.push(serde_json::json!({"role": "user", "content": request.user}));
        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if request.structured_schema.is_some() {
            body["response_format"] = serde_json::json!({"type": "json_object"});
        }
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response: ChatCompletionResponse = req
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?
            .error_for_status()
            .map_err(|e| GatewayError::Transport(e.to_string()))?
            .json()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        response
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| GatewayError::Transport("empty choices in response".into()))
    }
}
