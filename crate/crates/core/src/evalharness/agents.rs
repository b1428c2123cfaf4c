//! Built-in scripted agents used for baselines and sanity checks.

use base64::Engine;
use serde_json::{json, Value as Json};

use super::{Agent, AgentTurn, EpisodeContext, HarnessError, Role, TranscriptEntry};
use crate::grader::ABSTAIN_PHRASE;
use crate::materializer::{decode_table, parse_readme, README_PATH};
use crate::qaengine::{AnswerKind, GroundTruth, QType, Target};
use crate::repospec::Extension;
use crate::seedstream::SeedContext;
use crate::toolserver::{LIST_DIRECTORY, READ_BINARY_FILE, READ_TEXT_FILE};

fn answer(text: impl Into<String>) -> AgentTurn {
    AgentTurn::final_answer(json!({ "answer": text.into() }).to_string())
}

/// Always answers "not possible".
pub struct AlwaysAbstain;

impl Agent for AlwaysAbstain {
    fn id(&self) -> &str {
        "always-abstain"
    }

    fn step(&self, _: &EpisodeContext<'_>, _: &[TranscriptEntry]) -> Result<AgentTurn, HarnessError> {
        Ok(answer(ABSTAIN_PHRASE))
    }
}

/// Answers with the stored ground truth without calling any tool.
pub struct OracleReplay;

impl Agent for OracleReplay {
    fn id(&self) -> &str {
        "oracle-replay"
    }

    fn step(&self, ctx: &EpisodeContext<'_>, _: &[TranscriptEntry]) -> Result<AgentTurn, HarnessError> {
        Ok(match &ctx.item.ground_truth {
            GroundTruth::Answer { value } => answer(value.render()),
            GroundTruth::NotPossible { .. } => answer(ABSTAIN_PHRASE),
        })
    }
}

/// Seeded guesses of the right answer shape.
pub struct RandomGuess {
    pub seed: u64,
}

impl Agent for RandomGuess {
    fn id(&self) -> &str {
        "random-guess"
    }

    fn step(&self, ctx: &EpisodeContext<'_>, _: &[TranscriptEntry]) -> Result<AgentTurn, HarnessError> {
        let item = ctx.item;
        let mut s = SeedContext::new(self.seed, format!("guess/{}/{}", item.id, ctx.variant)).stream();
        let text = match &item.answer_kind {
            AnswerKind::CategoricalFinite { options } if !options.is_empty() => s.choose(options).clone(),
            AnswerKind::ThreeClass => s.choose(&["yes", "no", ABSTAIN_PHRASE]).to_string(),
            AnswerKind::Integer => s.range_inclusive(0, 500).to_string(),
            AnswerKind::Continuous => format!("{:.4}", s.standard_normal()),
            _ => "unknown".to_string(),
        };
        Ok(answer(text))
    }
}

/// Reads what it needs with at most two tool calls and answers the question
/// types that a fixed script can handle; everything else is an abstention.
/// Paths and prefixes come from the item's structured target.
pub struct ReferenceAgent;

/// Depth large enough to reach every file.
const FULL_DEPTH: usize = 64;
const PREVIEW_LINES: usize = 40;

fn observations(transcript: &[TranscriptEntry]) -> Vec<Json> {
    transcript
        .iter()
        .filter(|e| e.role == Role::Tool)
        .map(|e| e.observation.as_deref().and_then(|o| serde_json::from_str(o).ok()).unwrap_or(Json::Null))
        .collect()
}

fn ok(obs: &Json) -> bool {
    obs.get("status").and_then(Json::as_str) == Some("success")
}

fn paths(obs: &Json) -> Vec<String> {
    obs.get("paths")
        .and_then(Json::as_array)
        .map(|a| a.iter().filter_map(|p| p.as_str().map(str::to_string)).collect())
        .unwrap_or_default()
}

fn data_files(obs: &Json) -> impl Iterator<Item = String> {
    paths(obs).into_iter().filter(|p| Extension::of_path(p).is_some())
}

impl Agent for ReferenceAgent {
    fn id(&self) -> &str {
        "reference"
    }

    fn step(&self, ctx: &EpisodeContext<'_>, transcript: &[TranscriptEntry]) -> Result<AgentTurn, HarnessError> {
        let id = ctx.repo_id;
        let obs = observations(transcript);
        let list_all = |prefix: &str| AgentTurn::tool(LIST_DIRECTORY, json!({"id": id, "prefix": prefix, "depth": FULL_DEPTH}));
        let turn = match (ctx.item.qtype, &ctx.item.target, obs.as_slice()) {
            (QType::Readme, _, []) => AgentTurn::tool(LIST_DIRECTORY, json!({"id": id, "prefix": "/", "depth": 1})),
            (QType::Readme, _, [o]) => answer(if paths(o).iter().any(|p| p == README_PATH) { "yes" } else { "no" }),
            (QType::Title | QType::Abstract, _, []) => {
                AgentTurn::tool(READ_TEXT_FILE, json!({"id": id, "path": README_PATH}))
            }
            (q @ (QType::Title | QType::Abstract), _, [o]) => {
                let parsed = o.get("file_content").and_then(Json::as_str).and_then(parse_readme);
                match parsed {
                    Some((title, _)) if q == QType::Title => answer(title),
                    Some((_, abs)) => answer(abs),
                    None => answer(ABSTAIN_PHRASE),
                }
            }
            (QType::Extension, _, []) => list_all("/"),
            (QType::Extension, _, [o]) => {
                let mut counts = [0usize; 6];
                for p in data_files(o) {
                    let e = Extension::of_path(&p).expect("filtered");
                    counts[Extension::ALL.iter().position(|x| *x == e).expect("listed")] += 1;
                }
                let best = (0..6).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).expect("six");
                if counts[best] == 0 {
                    answer(ABSTAIN_PHRASE)
                } else {
                    answer(Extension::ALL[best].as_str())
                }
            }
            (QType::CountRows, Target::RowCount { path }, []) => {
                AgentTurn::tool(READ_TEXT_FILE, json!({"id": id, "path": path, "head": PREVIEW_LINES}))
            }
            (QType::CountRows, Target::RowCount { path }, [_]) => {
                AgentTurn::tool(READ_BINARY_FILE, json!({"id": id, "path": path}))
            }
            (QType::CountRows, Target::RowCount { path }, [_, o]) => {
                let bytes = o
                    .get("content_base64")
                    .and_then(Json::as_str)
                    .and_then(|b| base64::engine::general_purpose::STANDARD.decode(b).ok());
                let table = match (bytes, Extension::of_path(path)) {
                    (Some(b), Some(ext)) => decode_table(&b, ext).ok(),
                    _ => None,
                };
                match table {
                    Some(t) => answer(t.rows.len().to_string()),
                    None => answer(ABSTAIN_PHRASE),
                }
            }
            (QType::DirectoryPrefix, Target::FileCount { prefix }, []) => list_all(prefix.as_deref().unwrap_or("/")),
            (QType::DirectoryPrefix, Target::FileCount { prefix }, [o]) => {
                let prefix = prefix.as_deref().unwrap_or("");
                let n = if ok(o) { data_files(o).filter(|p| p.starts_with(prefix)).count() } else { 0 };
                answer(n.to_string())
            }
            _ => answer(ABSTAIN_PHRASE),
        };
        Ok(turn)
    }
}
