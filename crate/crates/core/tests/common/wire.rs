//! Pinned tool envelopes.

use std::collections::BTreeMap;

use reposim::repospec::Extension;
use reposim::toolserver::ToolService;
use serde_json::{json, Value as Json};

/// Tool, arguments and the exact bytes the stub service must answer with.
pub fn golden_cases() -> Vec<(&'static str, Json, &'static str)> {
    vec![
        (
            "list_directory",
            json!({"id": 1, "prefix": "/", "depth": 1}),
            r#"{"status": "success", "paths": ["README.md", "trt_d", "trt_e"]}"#,
        ),
        (
            "read_text_file",
            json!({"id": 1, "path": "README.md", "head": 1}),
            r##"{"status": "success", "file_content": "# Benchmarking trade-offs in Executive Function Development under varying operating conditions\n"}"##,
        ),
        ("list_directory", json!({"prefix": "/"}), r#"{"status": "error", "message": "missing argument \"id\""}"#),
        (
            "read_text_file",
            json!({"id": 1, "path": "nope.csv"}),
            r#"{"status": "error", "message": "file not found: nope.csv"}"#,
        ),
        ("frobnicate", json!({}), r#"{"status": "error", "message": "unknown tool \"frobnicate\""}"#),
        (
            "list_directory",
            json!({"id": 1, "prefix": "/", "depth": 0}),
            r#"{"status": "error", "message": "invalid pattern \"/\": depth must be at least 1"}"#,
        ),
    ]
}

/// One seed per extension, found by scanning.
pub fn seeds_by_extension(s: &ToolService) -> BTreeMap<&'static str, u64> {
    let mut out = BTreeMap::new();
    for seed in 0..400 {
        let ext = s.repository(seed).unwrap().spec().template.extension;
        out.entry(ext.as_str()).or_insert(seed);
        if out.len() == Extension::ALL.len() {
            break;
        }
    }
    assert_eq!(out.len(), 6, "every extension occurs in the first 400 seeds");
    out
}
