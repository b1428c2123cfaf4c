use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{Agent, AgentAction, AgentTurn, EpisodeContext, HarnessError, Role, TokenCounts, ToolCall, TranscriptEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpAgentConfig {
    /// Base URL of a chat-completions API with tool calling.
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_temperature() -> f64 {
    0.0
}

fn default_timeout() -> u64 {
    120
}

/// A model behind an OpenAI-style chat-completions endpoint.
#[derive(Debug)]
pub struct HttpAgent {
    config: HttpAgentConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpAgent {
    pub fn new(config: HttpAgentConfig) -> Self {
        let api_key = config.api_key_env.as_deref().and_then(|var| std::env::var(var).ok());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, api_key, agent }
    }
}

fn call_id(call: &ToolCall, n: usize) -> String {
    call.call_id.clone().unwrap_or_else(|| format!("call_{n}"))
}

/// Chat messages for a transcript. Each tool call becomes an assistant
/// message followed by its tool result.
pub fn chat_messages(transcript: &[TranscriptEntry]) -> Vec<Json> {
    let mut out = Vec::with_capacity(transcript.len());
    let mut last_id = String::new();
    let mut n = 0;
    for e in transcript {
        match (e.role, &e.tool_call) {
            (Role::Assistant, Some(call)) => {
                n += 1;
                last_id = call_id(call, n);
                out.push(json!({
                    "role": "assistant",
                    "content": if e.content.is_empty() { Json::Null } else { Json::String(e.content.clone()) },
                    "tool_calls": [{
                        "id": last_id,
                        "type": "function",
                        "function": {"name": call.name, "arguments": call.arguments.to_string()}
                    }]
                }));
            }
            (Role::Tool, _) => out.push(json!({
                "role": "tool",
                "tool_call_id": last_id,
                "content": e.observation.clone().unwrap_or_default()
            })),
            (role, _) => {
                let role = match role {
                    Role::System => "system",
                    Role::User => "user",
                    _ => "assistant",
                };
                out.push(json!({"role": role, "content": e.content}));
            }
        }
    }
    out
}

/// Parse one chat-completions reply into an agent turn.
pub fn parse_reply(reply: &Json) -> Result<AgentTurn, HarnessError> {
    let message = &reply["choices"][0]["message"];
    if message.is_null() {
        return Err(HarnessError::AgentUnavailable(format!("reply has no message: {reply}")));
    }
    let usage = TokenCounts {
        prompt: reply["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        completion: reply["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        total: reply["usage"]["total_tokens"].as_u64().unwrap_or(0),
    };
    let content = message["content"].as_str().unwrap_or_default().to_string();
    let calls: Vec<ToolCall> = message["tool_calls"]
        .as_array()
        .map(|a| {
            a.iter()
                .map(|c| {
                    let raw = c["function"]["arguments"].as_str().unwrap_or("{}");
                    ToolCall {
                        call_id: c["id"].as_str().map(str::to_string),
                        name: c["function"]["name"].as_str().unwrap_or_default().to_string(),
                        // Unparseable arguments reach the tool and come back as an error envelope.
                        arguments: serde_json::from_str(raw).unwrap_or(Json::String(raw.to_string())),
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    let action = if calls.is_empty() {
        AgentAction::Final(content.clone())
    } else {
        AgentAction::ToolCalls(calls)
    };
    Ok(AgentTurn { content, action, usage })
}

impl Agent for HttpAgent {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn step(&self, ctx: &EpisodeContext<'_>, transcript: &[TranscriptEntry]) -> Result<AgentTurn, HarnessError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let tools: Vec<Json> = ctx
            .tools
            .iter()
            .map(|t| {
                json!({"type": "function", "function": {
                    "name": t["name"], "description": t["description"], "parameters": t["inputSchema"]
                }})
            })
            .collect();
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": chat_messages(transcript),
            "tools": tools,
        });
        let remaining = ctx.deadline.saturating_duration_since(Instant::now());
        let mut call = self
            .agent
            .post(&url)
            .config()
            .timeout_global(Some(remaining.min(Duration::from_secs(self.config.timeout_secs))))
            .build()
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(&body)
            .map_err(|e| HarnessError::AgentUnavailable(format!("{url}: {e}")))?;
        let status = response.status();
        let reply: Json = response
            .body_mut()
            .read_json()
            .map_err(|e| HarnessError::AgentUnavailable(format!("{url}: unreadable response: {e}")))?;
        if !status.is_success() {
            return Err(HarnessError::AgentUnavailable(format!("{url}: HTTP {status}: {reply}")));
        }
        parse_reply(&reply)
    }
}
