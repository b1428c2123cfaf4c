//! Prompt text for live backends. Each prompt states the stage contract and
//! embeds the stage payload as JSON.

use super::{GenerationRequest, Stage};

pub const SYSTEM_PROMPT: &str = "You design realistic but fictional scientific research projects and \
the data they would produce. Answer with a single JSON object and nothing else.";

fn instructions(stage: Stage) -> &'static str {
    match stage {
        Stage::Titles => {
            "Propose `k` distinct candidate research project titles for the scientific context below. \
Respond as {\"titles\": [\"...\", ...]} with exactly `k` single-line titles."
        }
        Stage::Description => {
            "Write a project description for the title and context below: a testable hypothesis, the \
independent variables, the dependent variables, potential confounders and a short experimental setup. \
Respond as {\"hypothesis\": \"...\", \"independent_vars\": [{\"name\": \"...\", \"description\": \"...\"}], \
\"dependent_vars\": [...], \"confounders\": [...], \"setup_text\": \"...\"}. Every list needs at least one entry."
        }
        Stage::Abstract => {
            "Write a one-paragraph abstract for the project below, without markdown headings. \
Respond as {\"abstract\": \"...\"}."
        }
        Stage::PathStep => {
            "The project's data files live in a directory tree whose path is a sequence of placeholder \
variables separated by connectors. Given the placeholders chosen so far, choose the next one. A placeholder \
has a `name` (an identifier), a `kind` (independent, date, sequence or researcher; date, sequence and \
researcher at most once each), a `label` (literal text placed before the value in the path, such as \
\"cond=\" or \"phase_\" or \"\"; letters, digits and . _ - = only) and a `description`. Also choose the \
`connector` placed before it: \"/\", \"_\" or \"-\", or null for the first placeholder. Respond as \
{\"placeholder\": {\"name\": ..., \"kind\": ..., \"label\": ..., \"description\": ...}, \"connector\": ...}."
        }
        Stage::PathValues => {
            "List the values the placeholder below takes across the project's runs: 2 to 6 short unique \
values using letters, digits and . _ - = only. Dates are YYYY-MM-DD; sequence values are decimal \
integers. Respond as {\"values\": [\"...\", ...]}."
        }
        Stage::FileVariables => {
            "Choose the columns recorded in every data file. Each has a `name` (identifier, not reusing a \
path variable name), a `role` (identifier, datetime, independent or dependent), a `kind` (categorical, \
discrete_integer or continuous; identifier and datetime are categorical; dependent variables are numeric) \
and a `description`. Include at least one independent and one dependent variable. Respond as \
{\"variables\": [...]}."
        }
        Stage::DistParams => {
            "Choose a sampling distribution for the variable below. Categorical variables use \
{\"family\": \"categorical\", \"values\": [...], \"probs\": [...]} with probabilities summing to 1. \
Discrete variables use bernoulli {p}, binomial {n, p}, geometric {p}, negative_binomial {r, p} or \
poisson {lambda}. Continuous variables use beta {alpha, beta}, exponential {lambda}, normal {mu, sigma} \
or uniform {a, b}. Respond as {\"dist\": {\"family\": ..., ...}}."
        }
        Stage::DependentExpr => {
            "Write a plausible function computing the dependent variable below from the listed inputs, in \
this expression language: numbers, \"strings\", input names, + - * /, comparisons, and/or/not, \
`if c then a else b`, `lookup(key, {\"value\": number, ...}, default)`, and the functions exp, log, sqrt, \
pow, abs, min, max, floor, clamp(x, lo, hi) and parse_number(text) (first number in a string, e.g. \
\"35C\" -> 35). The name `error` is a zero-mean noise term that must enter the result. Guard every log and \
sqrt argument as log(max(1e-9, x)), divide only by nonzero literals or guarded terms, and give every lookup \
a default. Respond as {\"expr\": \"...\"}."
        }
        Stage::Paraphrase => {
            "Rewrite the question below the way a researcher on this project would ask it, keeping every \
number, threshold and value, and the statistic requested. If the question contains the token {path}, keep \
that token verbatim in your rewrite. Respond as {\"paraphrase\": \"...\"}."
        }
    }
}

/// User message for `request`, including the previous attempt's problem.
pub fn user_prompt(request: &GenerationRequest, feedback: Option<&str>) -> String {
    let payload = serde_json::to_string_pretty(&request.context_payload).expect("payloads serialize");
    let mut out = format!("{}\n\nInput:\n{payload}\n", instructions(request.stage));
    if let Some(problem) = feedback {
        out.push_str(&format!(
            "\nYour previous answer was rejected: {problem}\nReturn a corrected JSON object.\n"
        ));
    }
    out
}
