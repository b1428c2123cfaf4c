mod common;

use common::grading::{corpus_comparison, item, template};
use common::Replay;
use reposim::grader::{extract_answer, grade, ExtractionMode, GradeRecord, MatchedRule};
use reposim::qaengine::AnswerKind;
use reposim::value::Value;

#[test]
fn adversarial_corpus_matches_reference_grader() {
    let (n, mismatches, correct, fallback) = corpus_comparison();
    assert!(n >= 200, "corpus has {n} cases");
    assert!(mismatches.is_empty(), "{} mismatches:\n{}", mismatches.len(), mismatches.join("\n"));
    // The corpus exercises both outcomes and both extraction paths.
    assert!(correct > 50 && correct < n - 50, "{correct} of {n} correct");
    assert!(fallback > 30);
}

#[test]
fn worked_examples() {
    let base = template();
    let cont = item(&base, AnswerKind::Continuous, Some(Value::Real(1.234)), 3);
    let g = grade(&extract_answer("1.235"), &cont);
    assert!(g.correct);
    assert_eq!(g.matched_rule, MatchedRule::Continuous);
    let yes = item(&base, AnswerKind::ThreeClass, Some(Value::Str("yes".into())), 3);
    assert!(!grade(&extract_answer("yes; clearly, not no"), &yes).correct);
    let np = item(&base, AnswerKind::Integer, None, 3);
    let g = grade(&extract_answer("Not Possible"), &np);
    assert!(g.correct && g.predicted_not_possible);
    assert_eq!(g.matched_rule, MatchedRule::Abstention);
    let ex = extract_answer(r#"{"answer": 163}"#);
    assert_eq!((ex.answer_text.as_str(), ex.extraction_mode), ("163", ExtractionMode::StructuredObject));
    let ex = extract_answer(r#"{"answer": "yes"} {"answer":"no"}"#);
    assert_eq!(ex.answer_text, "no");
}

#[test]
fn continuous_rounding_is_symmetric() {
    let base = template();
    let mut r = Replay::for_stage(5, "symmetry");
    for _ in 0..2000 {
        let sig = 2 + (r.u64() % 3) as u32;
        let scale = 10f64.powi((r.u64() % 9) as i32 - 4);
        let a = (r.unit() - 0.5) * scale;
        let b = if r.unit() < 0.5 { a * (1.0 + (r.unit() - 0.5) * 0.02) } else { (r.unit() - 0.5) * scale };
        let ia = item(&base, AnswerKind::Continuous, Some(Value::Real(a)), sig);
        let ib = item(&base, AnswerKind::Continuous, Some(Value::Real(b)), sig);
        let ab = grade(&extract_answer(&format!("{b}")), &ia).correct;
        let ba = grade(&extract_answer(&format!("{a}")), &ib).correct;
        assert_eq!(ab, ba, "a={a} b={b} sig={sig}");
    }
}

#[test]
fn grade_records_are_deterministic() {
    let base = template();
    let it = item(&base, AnswerKind::Integer, Some(Value::Int(12)), 3);
    let a = GradeRecord::new(&it, 0, "m", "There are 12 rows");
    let b = GradeRecord::new(&it, 0, "m", "There are 12 rows");
    assert_eq!(a, b);
    assert!(a.correct);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
