//! Runs tool-using agents over question batches, records every step and
//! grades the final answers.

mod agents;
mod http_agent;
mod metrics;

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

pub use agents::{AlwaysAbstain, OracleReplay, RandomGuess, ReferenceAgent};
pub use http_agent::{HttpAgent, HttpAgentConfig};
pub use metrics::{
    agreement_pairs, compute_metrics, krippendorff_alpha, AgreementResult, Metrics, Report, Slice,
};

use crate::grader::{extract_answer, grade, ExtractedAnswer, GradeResult};
use crate::qaengine::{Category, QAItem, QType};
use crate::toolserver::ToolService;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("agent unavailable: {0}")]
    AgentUnavailable(String),
    #[error("question {id} has no variant {variant}")]
    NoSuchVariant { id: String, variant: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad ledger line {line}: {message}")]
    BadLedger { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_steps: usize,
    pub max_tool_calls: usize,
    pub timeout_secs: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_steps: 25,
            max_tool_calls: 20,
            timeout_secs: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u64,
    pub completion: u64,
    pub total: u64,
}

impl TokenCounts {
    pub fn add(&mut self, other: TokenCounts) {
        self.prompt += other.prompt;
        self.completion += other.completion;
        self.total += other.total;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    Templated,
    Paraphrase { model_id: String },
}

impl Variant {
    pub fn key(&self) -> String {
        match self {
            Variant::Templated => "templated".into(),
            Variant::Paraphrase { model_id } => format!("paraphrase:{model_id}"),
        }
    }

    /// Variant `index` of `item`: 0 is the template.
    pub fn of(item: &QAItem, index: usize) -> Option<Variant> {
        match index {
            0 => Some(Variant::Templated),
            i => item.paraphrases.get(i - 1).map(|p| Variant::Paraphrase {
                model_id: p.model_id.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_id: Option<String>,
    pub name: String,
    pub arguments: Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
}

impl TranscriptEntry {
    fn text(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_call: None,
            observation: None,
        }
    }
}

/// What an agent does on one turn.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentAction {
    /// One or more tool calls, executed in order.
    ToolCalls(Vec<ToolCall>),
    /// The final response, graded as is.
    Final(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTurn {
    /// Free text accompanying the action.
    pub content: String,
    pub action: AgentAction,
    pub usage: TokenCounts,
}

impl AgentTurn {
    pub fn final_answer(text: impl Into<String>) -> Self {
        Self {
            content: String::new(),
            action: AgentAction::Final(text.into()),
            usage: TokenCounts::default(),
        }
    }

    pub fn tool(name: &str, arguments: Json) -> Self {
        Self {
            content: String::new(),
            action: AgentAction::ToolCalls(vec![ToolCall {
                call_id: None,
                name: name.to_string(),
                arguments,
            }]),
            usage: TokenCounts::default(),
        }
    }
}

/// Everything an agent may see about the episode.
pub struct EpisodeContext<'a> {
    pub item: &'a QAItem,
    pub variant: usize,
    pub repo_id: u64,
    pub tools: &'a [Json],
    /// Remaining wall time for the episode.
    pub deadline: Instant,
}

pub trait Agent: Send + Sync {
    fn id(&self) -> &str;
    /// Next action given the transcript so far, which starts with the system
    /// and user messages.
    fn step(&self, ctx: &EpisodeContext<'_>, transcript: &[TranscriptEntry]) -> Result<AgentTurn, HarnessError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Answered,
    StepLimit,
    ToolCallLimit,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub question_id: String,
    pub repo_seed: u64,
    pub qtype: QType,
    pub category: Category,
    pub answerable: bool,
    pub variant_index: usize,
    pub variant: Variant,
    pub agent: String,
    pub transcript: Vec<TranscriptEntry>,
    pub tool_call_count: usize,
    pub steps: usize,
    pub token_counts: TokenCounts,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted: Option<ExtractedAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<GradeResult>,
    pub wall_time_secs: f64,
}

impl EpisodeRecord {
    /// Limit-terminated episodes count as incorrect.
    pub fn correct(&self) -> bool {
        self.grade.as_ref().is_some_and(|g| g.correct)
    }

    pub fn predicted_not_possible(&self) -> bool {
        self.grade.as_ref().is_some_and(|g| g.predicted_not_possible)
    }

    /// Re-grade from the final response in the transcript.
    pub fn regrade(&mut self, item: &QAItem) {
        if self.termination != Termination::Answered {
            self.extracted = None;
            self.grade = None;
            return;
        }
        if let Some(last) = self.transcript.iter().rev().find(|e| e.role == Role::Assistant && e.tool_call.is_none()) {
            let ex = extract_answer(&last.content);
            self.grade = Some(grade(&ex, item));
            self.extracted = Some(ex);
        }
    }
}

pub const SYSTEM_PROMPT: &str = "You are answering a question about a synthetic scientific data repository. \
Use the tools list_directory, read_text_file and read_binary_file to inspect it; every call needs the repository id given in the question. \
When you are done, reply with a JSON object {\"answer\": ...} and nothing after it. \
If the question cannot be answered from the repository, answer {\"answer\": \"not possible\"}.";

/// The user message for a variant.
pub fn user_message(item: &QAItem, variant: usize) -> Option<String> {
    let q = item.prompt(variant)?;
    Some(format!("Repository id: {}. {q}", item.repo_seed))
}

/// Run one agent on one item variant to completion or a limit.
pub fn run_episode(
    agent: &dyn Agent,
    item: &QAItem,
    variant: usize,
    service: &ToolService,
    limits: &Limits,
) -> Result<EpisodeRecord, HarnessError> {
    let variant_kind = Variant::of(item, variant).ok_or_else(|| HarnessError::NoSuchVariant {
        id: item.id.clone(),
        variant,
    })?;
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(limits.timeout_secs);
    let tools = service.tool_descriptors();
    let ctx = EpisodeContext {
        item,
        variant,
        repo_id: item.repo_seed,
        tools: &tools,
        deadline,
    };
    let mut transcript = vec![
        TranscriptEntry::text(Role::System, SYSTEM_PROMPT),
        TranscriptEntry::text(Role::User, user_message(item, variant).expect("variant exists")),
    ];
    let mut tokens = TokenCounts::default();
    let (mut steps, mut calls) = (0, 0);
    let mut answer: Option<String> = None;
    let termination = 'episode: loop {
        if steps >= limits.max_steps {
            break Termination::StepLimit;
        }
        if Instant::now() >= deadline {
            break Termination::Timeout;
        }
        let turn = agent.step(&ctx, &transcript)?;
        steps += 1;
        tokens.add(turn.usage);
        match turn.action {
            AgentAction::Final(text) => {
                transcript.push(TranscriptEntry::text(Role::Assistant, text.clone()));
                answer = Some(text);
                break Termination::Answered;
            }
            AgentAction::ToolCalls(list) => {
                for call in list {
                    if calls >= limits.max_tool_calls {
                        break 'episode Termination::ToolCallLimit;
                    }
                    let reply = service.call(&call.name, &call.arguments);
                    calls += 1;
                    transcript.push(TranscriptEntry {
                        role: Role::Assistant,
                        content: turn.content.clone(),
                        tool_call: Some(call),
                        observation: None,
                    });
                    transcript.push(TranscriptEntry {
                        role: Role::Tool,
                        content: String::new(),
                        tool_call: None,
                        observation: Some(String::from_utf8(reply.to_bytes()).expect("UTF-8 envelope")),
                    });
                }
            }
        }
    };
    let (extracted, grade) = match &answer {
        Some(text) => {
            let ex = extract_answer(text);
            let g = grade(&ex, item);
            (Some(ex), Some(g))
        }
        None => (None, None),
    };
    Ok(EpisodeRecord {
        question_id: item.id.clone(),
        repo_seed: item.repo_seed,
        qtype: item.qtype,
        category: item.category,
        answerable: item.ground_truth.is_answerable(),
        variant_index: variant,
        variant: variant_kind,
        agent: agent.id().to_string(),
        transcript,
        tool_call_count: calls,
        steps,
        token_counts: tokens,
        termination,
        extracted,
        grade,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Which variants of each item to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantSelection {
    TemplatedOnly,
    All,
}

/// Run every selected (item, variant) pair with at most `parallelism`
/// concurrent episodes. Output follows item then variant order.
pub fn run_batch(
    agent: &dyn Agent,
    items: &[QAItem],
    service: &ToolService,
    limits: &Limits,
    selection: VariantSelection,
    parallelism: usize,
) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let jobs: Vec<(&QAItem, usize)> = items
        .iter()
        .flat_map(|it| {
            let n = match selection {
                VariantSelection::TemplatedOnly => 1,
                VariantSelection::All => 1 + it.paraphrases.len(),
            };
            (0..n).map(move |v| (it, v))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::AgentUnavailable(format!("thread pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|(it, v)| run_episode(agent, it, *v, service, limits))
            .collect()
    })
}

pub fn write_ledger<W: Write>(records: &[EpisodeRecord], mut out: W) -> Result<(), HarnessError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_ledger<R: BufRead>(input: R) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| HarnessError::BadLedger {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
