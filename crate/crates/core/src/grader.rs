//! Deterministic grading of free-text agent responses against ground truth.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::qaengine::{AnswerKind, Category, GroundTruth, QAItem, QType};

pub const ABSTAIN_PHRASE: &str = "not possible";

static INTEGER_RUN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[-+]?\d+").unwrap());
static NUMBER_RUN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionMode {
    StructuredObject,
    WholeResponseFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    pub raw_response: String,
    pub answer_text: String,
    pub extraction_mode: ExtractionMode,
}

/// The top-level JSON objects in `s`: scanning left to right, an
/// object is any `{` that starts a well-formed object, and scanning resumes
/// after its end.
fn top_level_objects(s: &str) -> Vec<serde_json::Map<String, Json>> {
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(off) = s[i..].find('{') {
        let start = i + off;
        let mut it = serde_json::Deserializer::from_str(&s[start..]).into_iter::<Json>();
        match it.next() {
            Some(Ok(Json::Object(map))) => {
                i = start + it.byte_offset();
                out.push(map);
            }
            _ => i = start + 1,
        }
    }
    out
}

/// The last top-level JSON object with an `answer` key wins; without one the
/// whole response is the answer.
pub fn extract_answer(response: &str) -> ExtractedAnswer {
    for map in top_level_objects(response).into_iter().rev() {
        let Some(v) = map.get("answer") else { continue };
        let text = match v {
            Json::String(s) => s.clone(),
            Json::Null => String::new(),
            other => other.to_string(),
        };
        return ExtractedAnswer {
            raw_response: response.to_string(),
            answer_text: text,
            extraction_mode: ExtractionMode::StructuredObject,
        };
    }
    ExtractedAnswer {
        raw_response: response.to_string(),
        answer_text: response.to_string(),
        extraction_mode: ExtractionMode::WholeResponseFallback,
    }
}

/// Lowercase with runs of whitespace collapsed to one space and the ends
/// trimmed.
pub fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// The normalized answer is exactly the abstention phrase, allowing one
/// trailing period.
pub fn is_abstention(answer_text: &str) -> bool {
    let n = normalize(answer_text);
    n.strip_suffix('.').unwrap_or(&n) == ABSTAIN_PHRASE
}

/// `needle` occurs in `hay` without a letter or digit on either side.
fn contains_token(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(off) = hay[from..].find(needle) {
        let i = from + off;
        let j = i + needle.len();
        let before = hay[..i].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after = hay[j..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before && after {
            return true;
        }
        from = i + hay[i..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Occurrences of `o` in `a` not covered by an occurrence of `t`.
fn stray_mentions(a: &str, t: &str, o: &str) -> bool {
    if !contains_token(a, o) {
        return false;
    }
    if !t.contains(o) {
        return true;
    }
    // "low dose" legitimately contains "low"; look for "low" elsewhere.
    let masked = a.replace(t, &" ".repeat(t.len()));
    contains_token(&masked, o)
}

/// Mentions `truth` and none of the other options.
pub fn categorical_match(answer: &str, truth: &str, options: &[String]) -> bool {
    let a = normalize(answer);
    let t = normalize(truth);
    contains_token(&a, &t)
        && options
            .iter()
            .map(|o| normalize(o))
            .filter(|o| *o != t)
            .all(|o| !stray_mentions(&a, &t, &o))
}

/// Direct cast, else the first signed run of digits.
pub fn parse_integer(text: &str) -> Option<i64> {
    let t = text.trim();
    if let Ok(i) = t.parse::<i64>() {
        return Some(i);
    }
    if let Ok(x) = t.parse::<f64>() {
        if x.fract() == 0.0 && x.abs() < 9.0e15 {
            return Some(x as i64);
        }
    }
    INTEGER_RUN.find(t)?.as_str().parse().ok()
}

/// Direct cast, else the first signed run of digits and a decimal point.
pub fn parse_real(text: &str) -> Option<f64> {
    let t = text.trim();
    if let Ok(x) = t.parse::<f64>() {
        return x.is_finite().then_some(x);
    }
    NUMBER_RUN.find(t)?.as_str().parse().ok()
}

/// Sign, digits and decimal exponent of `x` rounded to `digits` significant
/// figures, half to even on the decimal expansion.
pub fn sig_digits(x: f64, digits: u32) -> (bool, String, i32) {
    assert!(digits >= 1);
    if x == 0.0 {
        return (false, "0".repeat(digits as usize), 0);
    }
    // Far more digits than an f64 needs, so exact ties stay visible.
    let s = format!("{:.39e}", x.abs());
    let (mant, exp) = s.split_once('e').unwrap();
    let mut exp: i32 = exp.parse().unwrap();
    let all: Vec<u8> = mant.bytes().filter(u8::is_ascii_digit).map(|b| b - b'0').collect();
    let n = digits as usize;
    let mut kept: Vec<u8> = all[..n].to_vec();
    let rest = &all[n..];
    let round_up = match rest.first() {
        Some(d) if *d > 5 => true,
        Some(5) => rest[1..].iter().any(|d| *d != 0) || kept[n - 1] % 2 == 1,
        _ => false,
    };
    if round_up {
        let mut i = n;
        loop {
            if i == 0 {
                kept.insert(0, 1);
                kept.pop();
                exp += 1;
                break;
            }
            i -= 1;
            if kept[i] == 9 {
                kept[i] = 0;
            } else {
                kept[i] += 1;
                break;
            }
        }
    }
    let text: String = kept.iter().map(|d| char::from(b'0' + d)).collect();
    (x < 0.0, text, exp)
}

/// Equal after rounding both sides to `sig_figs - 1` significant figures
/// (at least one).
pub fn continuous_match(answer: f64, truth: f64, sig_figs: u32) -> bool {
    let d = sig_figs.saturating_sub(1).max(1);
    answer.is_finite() && sig_digits(answer, d) == sig_digits(truth, d)
}

pub fn open_string_match(answer: &str, truth: &str) -> bool {
    let t = normalize(truth);
    !t.is_empty() && normalize(answer).contains(&t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchedRule {
    Categorical,
    Integer,
    Continuous,
    OpenString,
    Abstention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeResult {
    pub correct: bool,
    pub matched_rule: MatchedRule,
    pub predicted_not_possible: bool,
}

pub fn grade(extracted: &ExtractedAnswer, item: &QAItem) -> GradeResult {
    let text = &extracted.answer_text;
    let abstained = is_abstention(text);
    let result = |correct, matched_rule| GradeResult {
        correct,
        matched_rule,
        predicted_not_possible: abstained,
    };
    if abstained {
        return result(!item.ground_truth.is_answerable(), MatchedRule::Abstention);
    }
    let GroundTruth::Answer { value } = &item.ground_truth else {
        return result(false, MatchedRule::Abstention);
    };
    match &item.answer_kind {
        AnswerKind::CategoricalFinite { options } => {
            result(categorical_match(text, &value.render(), options), MatchedRule::Categorical)
        }
        AnswerKind::ThreeClass => {
            let options = ["yes", "no", ABSTAIN_PHRASE].map(String::from);
            result(categorical_match(text, &value.render(), &options), MatchedRule::Categorical)
        }
        AnswerKind::Integer => {
            let want = value.as_f64().map(|x| x as i64);
            result(want.is_some() && parse_integer(text) == want, MatchedRule::Integer)
        }
        AnswerKind::Continuous => {
            let ok = match (parse_real(text), value.as_f64()) {
                (Some(a), Some(t)) => continuous_match(a, t, item.sig_figs),
                _ => false,
            };
            result(ok, MatchedRule::Continuous)
        }
        AnswerKind::OpenString => result(open_string_match(text, &value.render()), MatchedRule::OpenString),
    }
}

/// Extract and grade in one step.
pub fn grade_response(response: &str, item: &QAItem) -> (ExtractedAnswer, GradeResult) {
    let ex = extract_answer(response);
    let g = grade(&ex, item);
    (ex, g)
}

/// One graded response, as written to a grade ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub item_id: String,
    pub variant: usize,
    pub model_id: String,
    pub repo_seed: u64,
    pub qtype: QType,
    pub category: Category,
    pub answerable: bool,
    pub extraction_mode: ExtractionMode,
    pub answer_text: String,
    pub matched_rule: MatchedRule,
    pub predicted_not_possible: bool,
    pub correct: bool,
}

impl GradeRecord {
    pub fn new(item: &QAItem, variant: usize, model_id: &str, response: &str) -> Self {
        let (ex, g) = grade_response(response, item);
        Self {
            item_id: item.id.clone(),
            variant,
            model_id: model_id.to_string(),
            repo_seed: item.repo_seed,
            qtype: item.qtype,
            category: item.category,
            answerable: item.ground_truth.is_answerable(),
            extraction_mode: ex.extraction_mode,
            answer_text: ex.answer_text,
            matched_rule: g.matched_rule,
            predicted_not_possible: g.predicted_not_possible,
            correct: g.correct,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_answer_object_wins() {
        let r = r#"First {"answer": "no"} then {"note": "x"} finally {"answer": "yes", "why": "a {brace}"}"#;
        assert_eq!(extract_answer(r).answer_text, "yes");
        let plain = extract_answer("plain 42");
        assert_eq!(plain.answer_text, "plain 42");
        assert_eq!(plain.extraction_mode, ExtractionMode::WholeResponseFallback);
        assert_eq!(extract_answer(r#"{"answer": 163}"#).answer_text, "163");
    }

    #[test]
    fn token_bounded() {
        let yn = ["yes".to_string(), "no".to_string()];
        assert!(contains_token("the answer is yes.", "yes"));
        assert!(!contains_token("yesterday", "yes"));
        assert!(categorical_match("Yes", "yes", &yn));
        assert!(!categorical_match("yes or no", "yes", &yn));
        let opts: Vec<String> = vec!["low".into(), "low dose".into()];
        assert!(categorical_match("low dose", "low dose", &opts));
        assert!(!categorical_match("low dose", "low", &opts));
        assert!(!categorical_match("low dose, maybe low", "low dose", &opts));
    }

    #[test]
    fn half_even_significant_digits() {
        assert_eq!(sig_digits(0.125, 2), (false, "12".into(), -1));
        assert_eq!(sig_digits(0.135, 2).1, "14");
        assert_eq!(sig_digits(9.96, 2), (false, "10".into(), 1));
        assert_eq!(sig_digits(-2.5, 1), (true, "2".into(), 0));
        assert!(continuous_match(1.235, 1.234, 3));
        assert!(!continuous_match(3.2, 3.14158, 4));
    }

    #[test]
    fn numeric_runs() {
        assert_eq!(parse_integer("10cm"), Some(10));
        assert_eq!(parse_integer(" 163 "), Some(163));
        assert_eq!(parse_integer("about -7 rows"), Some(-7));
        assert_eq!(parse_real("r = -0.25, p small"), Some(-0.25));
        assert_eq!(parse_real("1e-3"), Some(0.001));
        assert!(is_abstention("  Not Possible. "));
        assert!(!is_abstention("it is not possible to say"));
    }
}
