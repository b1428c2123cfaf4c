mod common;

use std::collections::{BTreeMap, HashMap};

use common::stub_repo;
use common::truth::{agrees, chi_sf_quadrature, export, oracle, verify_certificate, Exported};
use reposim::genmodel::Generator;
use reposim::qaengine::{
    generate_batch, literal_path, paraphrase_item, read_batch, stats, write_batch, AnswerKind, BatchConfig, QType,
};
use reposim::repospec::Repository;
use reposim::value::Value;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn full_plan() -> BatchConfig {
    BatchConfig {
        per_repo: 3,
        sample_size: 0,
        ..BatchConfig::default()
    }
}

#[test]
fn ground_truth_matches_recomputation_from_exported_files() {
    let repos: Vec<Repository> = (0..8).map(stub_repo).collect();
    let items = generate_batch(&repos, &full_plan()).unwrap();
    let exported: Vec<Exported> = repos.iter().map(export).collect();
    let by_seed: HashMap<u64, usize> = repos.iter().enumerate().map(|(i, r)| (r.spec().master_seed, i)).collect();
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for item in &items {
        let i = by_seed[&item.repo_seed];
        let want = oracle(&repos[i], &exported[i], item);
        assert!(agrees(item, &want), "{}: library {:?}, oracle {want:?}", item.id, item.ground_truth);
        let key = item.ground_truth.reason().map_or("answer", |r| r.as_str());
        *reasons.entry(format!("{}/{key}", item.qtype)).or_default() += 1;
    }
    println!("{reasons:#?}");
    // Every mechanism shows up in a batch this size.
    for r in ["empty-file-set", "empty-row-set", "invalid-operation"] {
        assert!(reasons.keys().any(|k| k.ends_with(r)), "no {r} items");
    }
}

#[test]
fn certificates_hold_against_exported_files() {
    let repos: Vec<Repository> = (8..14).map(stub_repo).collect();
    let items = generate_batch(&repos, &full_plan()).unwrap();
    let exported: Vec<Exported> = repos.iter().map(export).collect();
    let by_seed: HashMap<u64, usize> = repos.iter().enumerate().map(|(i, r)| (r.spec().master_seed, i)).collect();
    let mut checked = 0;
    for item in &items {
        let i = by_seed[&item.repo_seed];
        verify_certificate(&repos[i], &exported[i], item);
        checked += item.certificate.is_some() as usize;
    }
    assert!(checked > 0);
}

#[test]
fn steering_reaches_the_target_rate() {
    let repos: Vec<Repository> = (20..40).map(stub_repo).collect();
    let cfg = BatchConfig {
        sample_size: 300,
        ..BatchConfig::default()
    };
    let items = generate_batch(&repos, &cfg).unwrap();
    assert_eq!(items.len(), 300);
    let answerable = items.iter().filter(|i| i.ground_truth.is_answerable()).count() as f64 / 300.0;
    println!("answerable fraction {answerable:.4}");
    assert!((answerable - 0.72).abs() <= 0.02, "{answerable}");
}

#[test]
fn batches_are_deterministic_and_round_trip() {
    let repos: Vec<Repository> = (40..43).map(stub_repo).collect();
    let cfg = BatchConfig {
        sample_size: 40,
        sample_seed: 9,
        ..BatchConfig::default()
    };
    let a = generate_batch(&repos, &cfg).unwrap();
    let b = generate_batch(&repos, &cfg).unwrap();
    assert_eq!(a, b);
    let mut buf = Vec::new();
    write_batch(&a, &mut buf).unwrap();
    assert_eq!(read_batch(buf.as_slice()).unwrap(), a);
    let ids: std::collections::HashSet<&str> = a.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids.len(), a.len());
}

#[test]
fn item_invariants() {
    let repos: Vec<Repository> = (50..56).map(stub_repo).collect();
    for item in generate_batch(&repos, &full_plan()).unwrap() {
        assert_eq!(item.category, item.qtype.category());
        assert!([2, 3, 4].contains(&item.sig_figs));
        assert_eq!(item.preamble.is_empty(), item.answer_kind != AnswerKind::Continuous);
        if let Some(p) = literal_path(&item) {
            assert!(item.template_text.contains(p));
        }
        if matches!(
            item.qtype,
            QType::DirectoryPrefix | QType::DirectoryCondition | QType::Readme | QType::Extension
        ) {
            assert!(item.ground_truth.is_answerable(), "{}", item.id);
        }
        if item.qtype == QType::DirectoryCondition {
            assert_ne!(item.ground_truth.value(), Some(&Value::Int(0)), "{}", item.id);
        }
        if let AnswerKind::CategoricalFinite { options } = &item.answer_kind {
            if let Some(Value::Str(v)) = item.ground_truth.value() {
                assert!(options.contains(v), "{}: {v} not among {options:?}", item.id);
            }
        }
    }
}

#[test]
fn paraphrases_keep_the_literal_path() {
    let repo = stub_repo(60);
    let items = generate_batch(std::slice::from_ref(&repo), &full_plan()).unwrap();
    let generator = Generator::stub();
    let mut with_path = 0;
    for mut item in items {
        paraphrase_item(&mut item, &repo, &generator).unwrap();
        let text = &item.paraphrases[0].text;
        assert_ne!(text, &item.template_text);
        if let Some(p) = literal_path(&item) {
            assert!(text.contains(p), "{text}");
            with_path += 1;
        }
    }
    assert!(with_path > 0);
}



#[test]
fn chi_square_tail_matches_quadrature() {
    for df in [1.0, 2.0, 3.0, 4.0, 7.0, 12.0, 30.0] {
        for x in [0.3, 1.0, 2.5, 6.0, 11.0, 25.0, 48.0] {
            let lib = stats::chi_square_sf(df, x);
            let q = chi_sf_quadrature(df, x);
            assert!((lib - q).abs() < 1e-8, "df {df} x {x}: {lib} vs {q}");
            let s = ChiSquared::new(df).unwrap().sf(x);
            assert!((lib - s).abs() < 1e-10, "df {df} x {x}: {lib} vs statrs {s}");
        }
    }
}
