mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use common::{stub_repo, Replay};
use reposim::evalharness::{
    agreement_pairs, compute_metrics, krippendorff_alpha, read_ledger, run_batch, run_episode, write_ledger, Agent,
    AgentTurn, AlwaysAbstain, EpisodeContext, HarnessError, HttpAgent, HttpAgentConfig, Limits, OracleReplay, RandomGuess,
    ReferenceAgent, Termination, TranscriptEntry, VariantSelection,
};
use reposim::genmodel::Generator;
use reposim::qaengine::{generate_batch, paraphrase_batch, BatchConfig, QAItem, QType};
use reposim::repospec::Repository;
use reposim::toolserver::ToolService;
use serde_json::{json, Value as Json};

fn batch(seeds: std::ops::Range<u64>, per_repo: usize) -> (Vec<Repository>, Vec<QAItem>) {
    let repos: Vec<Repository> = seeds.map(stub_repo).collect();
    let cfg = BatchConfig {
        per_repo,
        sample_size: 0,
        ..Default::default()
    };
    let items = generate_batch(&repos, &cfg).unwrap();
    (repos, items)
}

#[test]
fn abstain_and_oracle_sanity() {
    let (repos, mut items) = batch(30..36, 2);
    paraphrase_batch(&mut items, &repos, &[Generator::stub()]).unwrap();
    let service = ToolService::stub();
    let limits = Limits::default();
    let unanswerable = items.iter().filter(|i| !i.ground_truth.is_answerable()).count() as f64 / items.len() as f64;
    assert!(unanswerable > 0.0);

    let abstain = run_batch(&AlwaysAbstain, &items, &service, &limits, VariantSelection::All, 4).unwrap();
    let report = compute_metrics(&abstain);
    assert_eq!(report.slices.len(), 2, "templated and one paraphrase variant");
    for s in &report.slices {
        assert_eq!(s.overall.n, items.len());
        assert_eq!(s.overall.unanswerable_recall, Some(1.0));
        assert!((s.overall.unanswerable_precision.unwrap() - unanswerable).abs() < 1e-12);
        assert!((s.overall.accuracy - unanswerable).abs() < 1e-12);
    }

    let oracle = run_batch(&OracleReplay, &items, &service, &limits, VariantSelection::All, 4).unwrap();
    let report = compute_metrics(&oracle);
    for s in &report.slices {
        assert_eq!(s.overall.accuracy, 1.0, "{}", s.variant);
        assert_eq!(s.overall.unanswerable_precision, Some(1.0));
        assert_eq!(s.by_qtype.len(), 11);
        assert!(s.by_category.values().all(|m| m.accuracy == 1.0));
    }
    assert!(oracle.iter().all(|r| r.tool_call_count == 0 && r.termination == Termination::Answered));
}

#[test]
fn reference_agent_counts_rows_in_two_calls() {
    let (_, items) = batch(40..44, 2);
    let service = ToolService::stub();
    let mut seen = 0;
    for item in items.iter().filter(|i| i.qtype == QType::CountRows) {
        let r = run_episode(&ReferenceAgent, item, 0, &service, &Limits::default()).unwrap();
        assert_eq!(r.tool_call_count, 2);
        assert_eq!(r.transcript[2].tool_call.as_ref().unwrap().arguments["head"], 40);
        assert!(r.correct(), "{}: {:?}", item.id, r.extracted);
        seen += 1;
    }
    assert!(seen >= 8);
    for item in items.iter().filter(|i| matches!(i.qtype, QType::Readme | QType::Title | QType::Abstract | QType::Extension | QType::DirectoryPrefix)) {
        let r = run_episode(&ReferenceAgent, item, 0, &service, &Limits::default()).unwrap();
        assert!(r.correct(), "{} {:?}: {:?}", item.id, item.qtype, r.extracted);
    }
}

/// Lists the root forever.
struct Looper;

impl Agent for Looper {
    fn id(&self) -> &str {
        "looper"
    }
    fn step(&self, ctx: &EpisodeContext<'_>, _: &[TranscriptEntry]) -> Result<AgentTurn, HarnessError> {
        Ok(AgentTurn::tool("list_directory", json!({"id": ctx.repo_id, "prefix": "/"})))
    }
}

struct Sleeper;

impl Agent for Sleeper {
    fn id(&self) -> &str {
        "sleeper"
    }
    fn step(&self, ctx: &EpisodeContext<'_>, t: &[TranscriptEntry]) -> Result<AgentTurn, HarnessError> {
        std::thread::sleep(Duration::from_millis(30));
        Looper.step(ctx, t)
    }
}

#[test]
fn limits_end_episodes_as_incorrect() {
    let (_, items) = batch(50..51, 1);
    let item = items.iter().find(|i| !i.ground_truth.is_answerable()).unwrap_or(&items[0]);
    let service = ToolService::stub();

    let r = run_episode(&Looper, item, 0, &service, &Limits::default()).unwrap();
    assert_eq!(r.termination, Termination::ToolCallLimit);
    assert_eq!(r.tool_call_count, 20);
    assert!(!r.correct() && r.grade.is_none());

    let loose = Limits {
        max_tool_calls: 1000,
        ..Limits::default()
    };
    let r = run_episode(&Looper, item, 0, &service, &loose).unwrap();
    assert_eq!(r.termination, Termination::StepLimit);
    assert_eq!(r.steps, 25);
    assert!(!r.correct());

    let quick = Limits {
        timeout_secs: 0.1,
        ..loose
    };
    let r = run_episode(&Sleeper, item, 0, &service, &quick).unwrap();
    assert_eq!(r.termination, Termination::Timeout);
    assert!(!r.correct());
    assert!(r.steps < 25);
}

#[test]
fn ledgers_round_trip_and_regrade_idempotently() {
    let (_, items) = batch(60..63, 1);
    let service = ToolService::stub();
    let records = run_batch(&RandomGuess { seed: 9 }, &items, &service, &Limits::default(), VariantSelection::TemplatedOnly, 2).unwrap();
    let again = run_batch(&RandomGuess { seed: 9 }, &items, &service, &Limits::default(), VariantSelection::TemplatedOnly, 1).unwrap();
    let strip = |rs: &[reposim::evalharness::EpisodeRecord]| {
        rs.iter()
            .map(|r| (r.question_id.clone(), r.extracted.clone(), r.grade.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&records), strip(&again));
    let mut buf = Vec::new();
    write_ledger(&records, &mut buf).unwrap();
    let mut back = read_ledger(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back, records);
    for (r, it) in back.iter_mut().zip(&items) {
        r.regrade(it);
    }
    assert_eq!(back, records);
}

#[test]
fn krippendorff_fixture_and_coin_flips() {
    let units: Vec<Vec<Option<u32>>> = [(1, 1), (1, 0), (0, 0), (0, 0)].iter().map(|&(a, b)| vec![Some(a), Some(b)]).collect();
    let r = krippendorff_alpha(&units);
    assert!((r.alpha.unwrap() - 8.0 / 15.0).abs() < 1e-12);

    let mut rng = Replay::for_stage(1, "coin-flips");
    let flips: Vec<Vec<Option<u32>>> = (0..10_000)
        .map(|_| vec![Some((rng.u64() & 1) as u32), Some((rng.u64() & 1) as u32)])
        .collect();
    let alpha = krippendorff_alpha(&flips).alpha.unwrap();
    assert!(alpha.abs() < 0.05, "alpha {alpha}");

    // Missing codes are skipped; a unit with one code contributes nothing.
    let mut with_missing = units.clone();
    with_missing.push(vec![Some(1), None]);
    assert_eq!(krippendorff_alpha(&with_missing), r);
}

#[test]
fn agreement_between_runs() {
    let (_, items) = batch(70..72, 1);
    let service = ToolService::stub();
    let a = run_batch(&OracleReplay, &items, &service, &Limits::default(), VariantSelection::TemplatedOnly, 1).unwrap();
    let b = run_batch(&AlwaysAbstain, &items, &service, &Limits::default(), VariantSelection::TemplatedOnly, 1).unwrap();
    let units = agreement_pairs(&a, &b);
    assert_eq!(units.len(), items.len());
    // Self-agreement is perfect unless every code is the same.
    let same = krippendorff_alpha(&agreement_pairs(&b, &b));
    assert_eq!(same.alpha, Some(1.0));
}

/// Minimal HTTP/1.1 server returning canned replies in order and recording
/// request bodies.
fn mock_chat_server(replies: Vec<Json>) -> (String, std::thread::JoinHandle<Vec<Json>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for reply in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            bodies.push(serde_json::from_slice(&body).unwrap());
            let text = reply.to_string();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            )
            .unwrap();
        }
        bodies
    });
    (url, handle)
}

#[test]
fn http_agent_drives_tools_and_answers() {
    let (_, items) = batch(80..81, 1);
    let item = items.iter().find(|i| i.qtype == QType::Readme).unwrap();
    let want = if item.ground_truth.value().unwrap().as_str() == Some("yes") { "yes" } else { "no" };
    let replies = vec![
        json!({
            "choices": [{"message": {"role": "assistant", "content": null, "tool_calls": [{
                "id": "call_a", "type": "function",
                "function": {"name": "list_directory", "arguments": format!("{{\"id\": {}, \"prefix\": \"/\"}}", item.repo_seed)}
            }]}}],
            "usage": {"prompt_tokens": 100, "completion_tokens": 10, "total_tokens": 110}
        }),
        json!({
            "choices": [{"message": {"role": "assistant", "content": format!("{{\"answer\": \"{want}\"}}")}}],
            "usage": {"prompt_tokens": 150, "completion_tokens": 5, "total_tokens": 155}
        }),
    ];
    let (url, server) = mock_chat_server(replies);
    let agent = HttpAgent::new(HttpAgentConfig {
        base_url: url,
        model: "mock-model".into(),
        api_key_env: None,
        temperature: 0.0,
        timeout_secs: 10,
    });
    let r = run_episode(&agent, item, 0, &ToolService::stub(), &Limits::default()).unwrap();
    let bodies = server.join().unwrap();
    assert_eq!(r.termination, Termination::Answered);
    assert!(r.correct());
    assert_eq!(r.tool_call_count, 1);
    assert_eq!(r.token_counts.total, 265);
    assert_eq!(r.agent, "mock-model");
    assert_eq!(bodies[0]["tools"].as_array().unwrap().len(), 3);
    let second = bodies[1]["messages"].as_array().unwrap();
    assert_eq!(second[2]["tool_calls"][0]["id"], "call_a");
    assert_eq!(second[3]["role"], "tool");
    assert_eq!(second[3]["tool_call_id"], "call_a");
    assert!(second[3]["content"].as_str().unwrap().starts_with(r#"{"status": "success""#));
}

#[test]
fn unreachable_agent_is_an_error() {
    let (_, items) = batch(80..81, 1);
    let agent = HttpAgent::new(HttpAgentConfig {
        base_url: "http://127.0.0.1:9/v1".into(),
        model: "m".into(),
        api_key_env: None,
        temperature: 0.0,
        timeout_secs: 2,
    });
    let err = run_episode(&agent, &items[0], 0, &ToolService::stub(), &Limits::default()).unwrap_err();
    assert!(matches!(err, HarnessError::AgentUnavailable(_)));
}
