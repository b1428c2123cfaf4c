//! Brute-force reference grader and the adversarial grading corpus.

use std::io::Write;
use std::process::{Command, Stdio};

use reposim::grader::{extract_answer, grade, ExtractionMode};
use reposim::qaengine::{generate_batch, AnswerKind, BatchConfig, GroundTruth, NotPossibleReason, QAItem};
use reposim::value::Value;
use serde_json::{json, Value as Json};

use super::{stub_repo, Replay};

/// Brute-force reference grader. Extraction tries every `{`..`}` substring
/// with Python's JSON parser; continuous answers are rounded with exact
/// decimal arithmetic.
pub const PY_GRADER: &str = r#"
import json, re, sys
from decimal import Decimal, ROUND_HALF_EVEN

def no_const(c):
    raise ValueError(c)

def objects(s):
    out, i = [], 0
    while i < len(s):
        if s[i] != "{":
            i += 1
            continue
        end = None
        for j in range(i + 1, len(s)):
            if s[j] != "}":
                continue
            try:
                v = json.loads(s[i:j + 1], parse_constant=no_const)
            except ValueError:
                continue
            if isinstance(v, dict):
                end = j + 1
            break
        if end is None:
            i += 1
        else:
            out.append(json.loads(s[i:end]))
            i = end
    return out

def extract(s):
    for o in reversed(objects(s)):
        if "answer" in o:
            v = o["answer"]
            if isinstance(v, str):
                return v, "structured-object"
            if v is None:
                return "", "structured-object"
            return json.dumps(v, separators=(",", ":")), "structured-object"
    return s, "whole-response-fallback"

def norm(s):
    return " ".join(s.split()).lower()

def abstains(s):
    n = norm(s)
    if n.endswith("."):
        n = n[:-1]
    return n == "not possible"

def token_spans(hay, needle):
    spans = []
    if not needle:
        return spans
    for i in range(len(hay) - len(needle) + 1):
        if hay[i:i + len(needle)] != needle:
            continue
        j = i + len(needle)
        if (i == 0 or not hay[i - 1].isalnum()) and (j == len(hay) or not hay[j].isalnum()):
            spans.append((i, j))
    return spans

def categorical(ans, truth, options):
    a, t = norm(ans), norm(truth)
    tspans = token_spans(a, t)
    if not tspans:
        return False
    for o in options:
        o = norm(o)
        if o == t:
            continue
        for (i, j) in token_spans(a, o):
            covered = False
            if o in t:
                # inside some occurrence of the truth (token-bounded or not)
                for k in range(len(a) - len(t) + 1):
                    if a[k:k + len(t)] == t and k <= i and j <= k + len(t):
                        covered = True
                        break
            if not covered:
                return False
    return True

INT_FULL = re.compile(r"[-+]?[0-9]+")
FLOAT_FULL = re.compile(r"[-+]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][-+]?[0-9]+)?|[-+]?(?:inf|infinity|nan)", re.I)

def direct_float(t):
    if FLOAT_FULL.fullmatch(t):
        return float(t)
    return None

def first_run(t, with_point):
    for i, c in enumerate(t):
        if c.isdigit() and c.isascii() or (with_point and c == "." and i + 1 < len(t) and t[i + 1].isascii() and t[i + 1].isdigit()):
            start = i - 1 if i > 0 and t[i - 1] in "+-" else i
            j = i
            while j < len(t) and t[j].isascii() and t[j].isdigit():
                j += 1
            if with_point and j < len(t) and t[j] == "." and c != ".":
                j += 1
                while j < len(t) and t[j].isascii() and t[j].isdigit():
                    j += 1
            elif c == ".":
                j = i + 1
                while j < len(t) and t[j].isascii() and t[j].isdigit():
                    j += 1
            return t[start:j]
    return None

def parse_int(text):
    t = text.strip()
    if INT_FULL.fullmatch(t):
        v = int(t)
        if -2**63 <= v < 2**63:
            return v
    x = direct_float(t)
    if x is not None and x == x and abs(x) != float("inf") and x == int(x) and abs(x) < 9e15:
        return int(x)
    r = first_run(t, False)
    if r is None:
        return None
    v = int(r)
    return v if -2**63 <= v < 2**63 else None

def parse_real(text):
    t = text.strip()
    x = direct_float(t)
    if x is not None:
        return x if abs(x) != float("inf") and x == x else None
    r = first_run(t, True)
    return None if r is None else float(r)

def rounded(x, d):
    if x == 0:
        return Decimal(0)
    q = Decimal(x)
    exp = q.adjusted() - (d - 1)
    r = q.quantize(Decimal(1).scaleb(exp), rounding=ROUND_HALF_EVEN)
    return r

def grade(case):
    text, mode = extract(case["response"])
    if abstains(text):
        return {"answer_text": text, "mode": mode, "pnp": True, "correct": not case["answerable"]}
    out = {"answer_text": text, "mode": mode, "pnp": False}
    if not case["answerable"]:
        out["correct"] = False
        return out
    kind, truth = case["kind"], case["truth"]
    if kind == "categorical":
        ok = categorical(text, truth, case["options"])
    elif kind == "three_class":
        ok = categorical(text, truth, ["yes", "no", "not possible"])
    elif kind == "integer":
        ok = parse_int(text) == int(truth)
    elif kind == "continuous":
        a = parse_real(text)
        d = max(case["sig_figs"] - 1, 1)
        ok = a is not None and rounded(a, d) == rounded(float(truth), d)
    else:
        t = norm(truth)
        ok = bool(t) and t in norm(text)
    out["correct"] = ok
    return out

for line in sys.stdin:
    print(json.dumps(grade(json.loads(line))))
"#;

pub fn reference_grades(cases: &[Json]) -> Vec<Json> {
    let mut child = Command::new("python3")
        .args(["-c", PY_GRADER])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .expect("python3 is needed for the reference grader");
    let mut input = String::new();
    for c in cases {
        input.push_str(&c.to_string());
        input.push('\n');
    }
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "reference grader failed");
    String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

pub fn template() -> QAItem {
    let repo = stub_repo(11);
    let cfg = BatchConfig {
        per_repo: 1,
        sample_size: 0,
        ..Default::default()
    };
    generate_batch(&[repo], &cfg).unwrap().remove(0)
}

pub fn item(base: &QAItem, kind: AnswerKind, truth: Option<Value>, sig_figs: u32) -> QAItem {
    let mut it = base.clone();
    it.answer_kind = kind;
    it.sig_figs = sig_figs;
    it.ground_truth = match truth {
        Some(value) => GroundTruth::Answer { value },
        None => GroundTruth::NotPossible {
            reason: NotPossibleReason::EmptyRowSet,
            detail: None,
        },
    };
    it
}

pub fn wrappers(answer: &str, r: &mut Replay) -> Vec<String> {
    let quoted = serde_json::to_string(answer).unwrap();
    let mut out = vec![
        answer.to_string(),
        format!("{{\"answer\": {quoted}}}"),
        format!("After reading the file I am fairly sure. {{\"answer\": {quoted}, \"confidence\": \"high\"}}"),
        format!("{{\"answer\": \"draft\"}} Actually, on reflection: {{\"answer\": {quoted}}}"),
        format!("Thinking {{not json}} then {{\"answer\": {quoted}}} and a trailing {{\"note\": \"{{\"}}"),
    ];
    // Unbalanced quote and brace in the prose before the object.
    if r.unit() < 0.5 {
        out.push(format!("He wrote \"{{ and left. {{\"answer\": {quoted}}}"));
    }
    out
}

pub struct Case {
    pub item: QAItem,
    pub response: String,
}

pub fn corpus() -> Vec<Case> {
    let base = template();
    let mut r = Replay::for_stage(2024, "grader-corpus");
    let mut out = Vec::new();

    let exts: Vec<String> = ["csv", "json", "jsonl", "xlsx", "txt", "log"].map(String::from).to_vec();
    for truth in ["json", "csv", "log"] {
        let it = item(&base, AnswerKind::CategoricalFinite { options: exts.clone() }, Some(Value::Str(truth.into())), 3);
        let answers = vec![
            truth.to_string(),
            truth.to_uppercase(),
            format!("The files are .{truth} files."),
            format!("{truth} or csv"),
            format!("{truth}l"),
            format!("({truth})"),
            "jsonl".into(),
            "xlsx, maybe".into(),
            format!("  {}  ", truth.to_uppercase()),
            "Not possible".into(),
        ];
        push(&mut out, &it, answers, &mut r);
    }
    let doses = vec!["low".to_string(), "low dose".to_string(), "high".to_string()];
    let it = item(&base, AnswerKind::CategoricalFinite { options: doses }, Some(Value::Str("low dose".into())), 3);
    push(
        &mut out,
        &it,
        vec!["low dose".into(), "Low  Dose group".into(), "low".into(), "low dose, not high".into(), "low dose (low)".into()],
        &mut r,
    );

    for truth in ["yes", "no"] {
        let it = item(&base, AnswerKind::ThreeClass, Some(Value::Str(truth.into())), 3);
        push(
            &mut out,
            &it,
            vec![
                "yes".into(),
                "No.".into(),
                "yes; clearly, not no".into(),
                "Yes, it is significant".into(),
                "not possible".into(),
                "nope".into(),
                "yes, not possible".into(),
            ],
            &mut r,
        );
    }

    for truth in [163i64, 1234, -7, 0] {
        let it = item(&base, AnswerKind::Integer, Some(Value::Int(truth)), 3);
        let mut answers = vec![
            truth.to_string(),
            format!("{truth} rows"),
            format!("There are {truth} data rows."),
            format!("{truth}cm"),
            format!("{truth}.0"),
            format!("{truth}.5"),
            format!("about {}", truth + 1),
            format!("+{truth}"),
            format!("row count {truth}, header 1"),
            format!("{}e0", truth),
            "none".into(),
            String::new(),
        ];
        if truth >= 1000 {
            answers.push(format!("{},{:03}", truth / 1000, truth % 1000));
        }
        push(&mut out, &it, answers, &mut r);
        // Numeric JSON values, not strings.
        for v in [json!(truth), json!(truth as f64), json!(truth as f64 + 0.25)] {
            out_push_raw(&mut out, &it, format!("{{\"answer\": {v}}}"));
        }
    }

    for (truth, sig) in [(1.234f64, 3u32), (0.0012345, 4), (-52.75, 3), (1.25, 3), (1234.5, 2), (0.5, 2)] {
        let it = item(&base, AnswerKind::Continuous, Some(Value::Real(truth)), sig);
        let mut answers = vec![
            format!("{truth}"),
            format!("{:.1$}", truth, 6),
            format!("{truth:e}"),
            format!("approximately {truth} units"),
            format!("~{}", truth * 1.004),
            format!("{}", truth * 1.04),
            format!("{}", -truth),
            format!("The mean is {:.2} (n=150)", truth),
            "n/a".into(),
            "inf".into(),
        ];
        if truth.abs() >= 1000.0 {
            answers.push(format!("{},{:05.1}", (truth / 1000.0) as i64, truth % 1000.0));
        }
        if truth.abs() < 1.0 {
            answers.push(format!("{}", truth).replacen("0.", ".", 1));
        }
        answers.push("1.235".into());
        push(&mut out, &it, answers, &mut r);
    }

    let title = "Benchmarking Trade-offs in  Sleep Research".to_string();
    let it = item(&base, AnswerKind::OpenString, Some(Value::Str(title.clone())), 3);
    push(
        &mut out,
        &it,
        vec![
            title.clone(),
            format!("The title is \"{}\".", title.to_lowercase()),
            title.replace("  ", "\n"),
            "Benchmarking trade-offs".into(),
            String::new(),
        ],
        &mut r,
    );

    let unanswerable = item(&base, AnswerKind::Continuous, None, 3);
    push(
        &mut out,
        &unanswerable,
        vec!["not possible".into(), "Not Possible.".into(), "NOT POSSIBLE..".into(), "it is not possible".into(), "0".into()],
        &mut r,
    );
    out
}

pub fn push(out: &mut Vec<Case>, item: &QAItem, answers: Vec<String>, r: &mut Replay) {
    for a in answers {
        for w in wrappers(&a, r) {
            out.push(Case {
                item: item.clone(),
                response: w,
            });
        }
    }
}

pub fn out_push_raw(out: &mut Vec<Case>, item: &QAItem, response: String) {
    out.push(Case {
        item: item.clone(),
        response,
    });
}

pub fn case_json(c: &Case) -> Json {
    let (kind, options) = match &c.item.answer_kind {
        AnswerKind::CategoricalFinite { options } => ("categorical", options.clone()),
        AnswerKind::ThreeClass => ("three_class", vec![]),
        AnswerKind::Integer => ("integer", vec![]),
        AnswerKind::Continuous => ("continuous", vec![]),
        AnswerKind::OpenString => ("open_string", vec![]),
    };
    let truth = match &c.item.ground_truth {
        GroundTruth::Answer { value } => match value {
            Value::Int(i) => json!(i.to_string()),
            Value::Real(x) => json!(format!("{x:e}")),
            Value::Str(s) => json!(s),
        },
        _ => Json::Null,
    };
    json!({
        "response": c.response,
        "kind": kind,
        "options": options,
        "truth": truth,
        "sig_figs": c.item.sig_figs,
        "answerable": c.item.ground_truth.is_answerable(),
    })
}

/// Runs the corpus through the library and the reference grader.
/// Returns the corpus size, the disagreements, and how many cases were
/// graded correct and took the fallback extraction path.
pub fn corpus_comparison() -> (usize, Vec<String>, usize, usize) {
    let corpus = corpus();
    let want = reference_grades(&corpus.iter().map(case_json).collect::<Vec<_>>());
    let mut mismatches = Vec::new();
    let (mut correct, mut fallback) = (0, 0);
    for (c, w) in corpus.iter().zip(&want) {
        let ex = extract_answer(&c.response);
        let g = grade(&ex, &c.item);
        let mode = match ex.extraction_mode {
            ExtractionMode::StructuredObject => "structured-object",
            ExtractionMode::WholeResponseFallback => "whole-response-fallback",
        };
        correct += g.correct as usize;
        fallback += (mode == "whole-response-fallback") as usize;
        if ex.answer_text != w["answer_text"].as_str().unwrap()
            || mode != w["mode"]
            || g.correct != w["correct"]
            || g.predicted_not_possible != w["pnp"]
        {
            mismatches.push(format!("{:?} [{}]: got {:?}/{} want {}", c.response, c.item.answer_kind.as_str(), ex.answer_text, g.correct, w));
        }
    }
    (corpus.len(), mismatches, correct, fallback)
}
