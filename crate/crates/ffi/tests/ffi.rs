use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use reposim_ffi::*;

fn take(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { rs_string_free(p) };
    s
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(rs_last_error_message()) }.to_str().unwrap().to_string()
}

fn service() -> *mut RsToolService {
    let mut svc = ptr::null_mut();
    assert_eq!(unsafe { rs_service_new(ptr::null(), &mut svc) }, RS_OK);
    svc
}

fn call(svc: *mut RsToolService, tool: &str, args: &str) -> (i32, Option<String>) {
    let tool = CString::new(tool).unwrap();
    let args = CString::new(args).unwrap();
    let mut out = ptr::null_mut();
    let rc = unsafe { rs_service_call(svc, tool.as_ptr(), args.as_ptr(), &mut out) };
    (rc, (rc == RS_OK).then(|| take(out)))
}

#[test]
fn service_lists_and_reads_through_the_abi() {
    let svc = service();
    let (rc, listing) = call(svc, "list_directory", r#"{"id": 7, "prefix": "/", "depth": 64}"#);
    assert_eq!(rc, RS_OK);
    let v: serde_json::Value = serde_json::from_str(listing.as_deref().unwrap()).unwrap();
    assert_eq!(v["status"], "success");
    let file = v["paths"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|p| p.as_str())
        .find(|p| p.contains('.') && !p.ends_with(".xlsx"))
        .unwrap()
        .to_string();
    let (rc, text) = call(svc, "read_text_file", &format!(r#"{{"id": 7, "path": "{file}", "head": 2}}"#));
    assert_eq!(rc, RS_OK);
    assert!(text.unwrap().starts_with(r#"{"status": "success", "file_content": "#));
    let mut builds = 0usize;
    assert_eq!(unsafe { rs_service_build_count(svc, &mut builds) }, RS_OK);
    assert_eq!(builds, 1);
    unsafe { rs_service_free(svc) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let svc = service();
    let (rc, _) = call(svc, "list_directory", "{not json");
    assert_eq!(rc, RS_ERR_INVALID_ARGUMENT);
    assert!(last_error().contains("arguments_json"));
    // Tool-level failures are envelopes, not status codes.
    let (rc, body) = call(svc, "read_text_file", r#"{"id": 7, "path": "missing.csv"}"#);
    assert_eq!(rc, RS_OK);
    assert!(body.unwrap().starts_with(r#"{"status": "error", "message": "#));
    assert_eq!(last_error(), "");
    let mut out = ptr::null_mut();
    let rc = unsafe { rs_service_call(ptr::null(), c"x".as_ptr(), c"{}".as_ptr(), &mut out) };
    assert_eq!(rc, RS_ERR_NULL);
    unsafe { rs_service_free(svc) };
    unsafe { rs_service_free(ptr::null_mut()) };
    unsafe { rs_string_free(ptr::null_mut()) };
}

#[test]
fn bad_configuration_is_a_config_error() {
    let mut svc = ptr::null_mut();
    let rc = unsafe { rs_service_new(c"no_such_key = 1".as_ptr(), &mut svc) };
    assert_eq!(rc, RS_ERR_CONFIG);
    assert!(svc.is_null());
    let rc = unsafe { rs_service_new(c"taxonomy = \"/definitely/missing.json\"".as_ptr(), &mut svc) };
    assert_eq!(rc, RS_ERR_CONFIG);
    assert!(last_error().contains("/definitely/missing.json"));
}

#[test]
fn seed_derivation_matches_the_library() {
    let mut s = 0u64;
    assert_eq!(unsafe { rs_derive_stage_seed(42, c"titles".as_ptr(), &mut s) }, RS_OK);
    assert_eq!(s, reposim::seedstream::derive_stage_seed(42, "titles"));
}

#[test]
fn grading_through_the_abi() {
    let items = reposim::qaengine::generate_batch(
        &[reposim::repospec::Repository::new(
            reposim::repospec::build_repository_spec(
                3,
                &reposim::taxonomy::Taxonomy::bundled(),
                &Default::default(),
                &reposim::genmodel::Generator::stub(),
            )
            .unwrap(),
        )],
        &reposim::qaengine::BatchConfig {
            per_repo: 1,
            sample_size: 0,
            ..Default::default()
        },
    )
    .unwrap();
    for item in &items {
        let truth = match &item.ground_truth {
            reposim::qaengine::GroundTruth::Answer { value } => value.render(),
            _ => "not possible".to_string(),
        };
        let item_json = CString::new(serde_json::to_string(item).unwrap()).unwrap();
        let response = CString::new(serde_json::json!({ "answer": truth }).to_string()).unwrap();
        let mut correct = -1;
        let mut result = ptr::null_mut();
        let rc = unsafe { rs_grade(item_json.as_ptr(), response.as_ptr(), &mut correct, &mut result) };
        assert_eq!(rc, RS_OK, "{}", last_error());
        assert_eq!(correct, 1, "{}", item.id);
        let v: serde_json::Value = serde_json::from_str(&take(result)).unwrap();
        assert_eq!(v["grade"]["correct"], true);
    }
}

fn target_dir() -> PathBuf {
    // tests/ffi-<hash> lives in target/<profile>/deps.
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(header_dir.join("reposim.h")).unwrap();
    for f in ["rs_service_new", "rs_service_call", "rs_service_free", "rs_grade", "rs_string_free", "rs_last_error_message"] {
        assert!(header.contains(f), "{f} missing from header");
    }
    let lib = target_dir().join("libreposim_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "reposim.h"
int main(void) {
    RsToolService *svc = NULL;
    if (rs_service_new(NULL, &svc) != RS_OK) return 10;
    char *out = NULL;
    if (rs_service_call(svc, "list_directory", "{\"id\": 1, \"prefix\": \"/\"}", &out) != RS_OK) return 11;
    if (strncmp(out, "{\"status\": \"success\"", 20) != 0) return 12;
    rs_string_free(out);
    if (rs_service_call(svc, "list_directory", "nope", &out) != RS_ERR_INVALID_ARGUMENT) return 13;
    if (strlen(rs_last_error_message()) == 0) return 14;
    rs_service_free(svc);
    printf("%s\n", rs_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler is required");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C smoke program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
