//! Agent-facing repository tools. Repositories are built on first use from
//! their seed and every file is rendered on demand.

mod envelope;
pub mod mcp;
pub mod wire;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use base64::Engine;
use serde_json::{json, Value as Json};

pub use envelope::{to_python_json, ToolResponse};

use crate::genmodel::Generator;
use crate::materializer::{file_bytes, truncate_lines, vfs_list, VfsError};
use crate::repospec::{build_repository_spec, BuildParams, Extension, Repository};
use crate::taxonomy::Taxonomy;

pub const LIST_DIRECTORY: &str = "list_directory";
pub const READ_TEXT_FILE: &str = "read_text_file";
pub const READ_BINARY_FILE: &str = "read_binary_file";
/// Name reserved for an externally provided code interpreter.
pub const RUN_PYTHON_CODE: &str = "run_python_code";
pub const PYTHON_TIME_LIMIT_SECS: u64 = 60;
pub const PYTHON_MEMORY_LIMIT_MB: u64 = 512;

/// A tool implemented outside this crate and mounted on the service.
pub trait ExternalTool: Send + Sync {
    fn name(&self) -> &str;
    fn description(&self) -> String;
    fn input_schema(&self) -> Json;
    /// The reply is passed through to the caller as is.
    fn call(&self, arguments: &Json) -> Json;
}

/// A built-in envelope or an external tool's reply.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolReply {
    Builtin(ToolResponse),
    External(Json),
}

impl ToolReply {
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            ToolReply::Builtin(r) => r.to_bytes(),
            ToolReply::External(v) => to_python_json(v),
        }
    }

    pub fn is_error(&self) -> bool {
        match self {
            ToolReply::Builtin(r) => r.is_error(),
            ToolReply::External(v) => v.get("status").and_then(Json::as_str) == Some("error"),
        }
    }
}

type FileSlot = Arc<OnceLock<Result<Arc<Vec<u8>>, VfsError>>>;

struct RepoEntry {
    repo: Repository,
    files: Mutex<HashMap<String, FileSlot>>,
}

impl RepoEntry {
    /// Encoded bytes of `path`, rendered at most once.
    fn bytes(&self, path: &str) -> Result<Arc<Vec<u8>>, VfsError> {
        let slot = {
            let mut files = self.files.lock().unwrap();
            files.entry(path.to_string()).or_default().clone()
        };
        slot.get_or_init(|| file_bytes(&self.repo, path).map(Arc::new)).clone()
    }
}

type RepoSlot = Arc<OnceLock<Result<Arc<RepoEntry>, String>>>;

pub struct ToolService {
    taxonomy: Taxonomy,
    params: BuildParams,
    generator: Generator,
    repos: Mutex<HashMap<u64, RepoSlot>>,
    builds: AtomicUsize,
    external: HashMap<String, Arc<dyn ExternalTool>>,
}

impl ToolService {
    pub fn new(taxonomy: Taxonomy, params: BuildParams, generator: Generator) -> Self {
        Self {
            taxonomy,
            params,
            generator,
            repos: Mutex::new(HashMap::new()),
            builds: AtomicUsize::new(0),
            external: HashMap::new(),
        }
    }

    /// Bundled taxonomy, default parameters and the stub backend.
    pub fn stub() -> Self {
        Self::new(Taxonomy::bundled(), BuildParams::default(), Generator::stub())
    }

    pub fn register_external(&mut self, tool: Arc<dyn ExternalTool>) -> Result<(), String> {
        let name = tool.name().to_string();
        if [LIST_DIRECTORY, READ_TEXT_FILE, READ_BINARY_FILE].contains(&name.as_str()) {
            return Err(format!("{name} is a built-in tool"));
        }
        self.external.insert(name, tool);
        Ok(())
    }

    /// Number of repository specs constructed so far.
    pub fn build_count(&self) -> usize {
        self.builds.load(Ordering::SeqCst)
    }

    fn entry(&self, id: u64) -> Result<Arc<RepoEntry>, String> {
        let slot = {
            let mut repos = self.repos.lock().unwrap();
            repos.entry(id).or_default().clone()
        };
        slot.get_or_init(|| {
            self.builds.fetch_add(1, Ordering::SeqCst);
            build_repository_spec(id, &self.taxonomy, &self.params, &self.generator)
                .map(|spec| {
                    Arc::new(RepoEntry {
                        repo: Repository::new(spec),
                        files: Mutex::new(HashMap::new()),
                    })
                })
                .map_err(|e| format!("repository {id} could not be generated: {e}"))
        })
        .clone()
    }

    /// The repository for `id`, building it on first use.
    pub fn repository(&self, id: u64) -> Result<Repository, String> {
        self.entry(id).map(|e| e.repo.clone())
    }

    pub fn list_directory(&self, id: u64, prefix: &str, depth: usize) -> ToolResponse {
        let entry = match self.entry(id) {
            Ok(e) => e,
            Err(m) => return ToolResponse::error(m),
        };
        match vfs_list(&entry.repo, prefix, depth) {
            Ok(paths) => ToolResponse::paths(paths),
            Err(e) => ToolResponse::error(e.to_string()),
        }
    }

    pub fn read_text_file(&self, id: u64, path: &str, head: Option<usize>, tail: Option<usize>) -> ToolResponse {
        if Extension::of_path(path).is_some_and(Extension::is_binary) {
            return ToolResponse::error(format!("{path} is a binary file; use {READ_BINARY_FILE}"));
        }
        let bytes = match self.entry(id).and_then(|e| e.bytes(path).map_err(|e| e.to_string())) {
            Ok(b) => b,
            Err(m) => return ToolResponse::error(m),
        };
        let cut = truncate_lines(&bytes, head, tail);
        match String::from_utf8(cut) {
            Ok(s) => ToolResponse::text(s),
            Err(_) => ToolResponse::error(format!("{path} is not valid UTF-8; use {READ_BINARY_FILE}")),
        }
    }

    pub fn read_binary_file(&self, id: u64, path: &str) -> ToolResponse {
        match self.entry(id).and_then(|e| e.bytes(path).map_err(|e| e.to_string())) {
            Ok(b) => ToolResponse::binary(
                base64::engine::general_purpose::STANDARD.encode(b.as_slice()),
                mime_type(path).to_string(),
            ),
            Err(m) => ToolResponse::error(m),
        }
    }

    /// Dispatch a call by tool name with JSON arguments.
    pub fn call(&self, tool: &str, args: &Json) -> ToolReply {
        let builtin = |r: Result<ToolResponse, String>| ToolReply::Builtin(r.unwrap_or_else(ToolResponse::error));
        match tool {
            LIST_DIRECTORY => builtin((|| {
                let id = arg_id(args)?;
                let prefix = arg_str(args, "prefix")?.unwrap_or("/");
                let depth = arg_usize(args, "depth")?.unwrap_or(1);
                Ok(self.list_directory(id, prefix, depth))
            })()),
            READ_TEXT_FILE => builtin((|| {
                let id = arg_id(args)?;
                let path = arg_str(args, "path")?.ok_or("missing argument \"path\"")?;
                Ok(self.read_text_file(id, path, arg_usize(args, "head")?, arg_usize(args, "tail")?))
            })()),
            READ_BINARY_FILE => builtin((|| {
                let id = arg_id(args)?;
                let path = arg_str(args, "path")?.ok_or("missing argument \"path\"")?;
                Ok(self.read_binary_file(id, path))
            })()),
            other => match self.external.get(other) {
                Some(t) => ToolReply::External(t.call(args)),
                None => ToolReply::Builtin(ToolResponse::error(format!("unknown tool {other:?}"))),
            },
        }
    }

    /// Descriptors for every available tool.
    pub fn tool_descriptors(&self) -> Vec<Json> {
        let id = json!({"type": "integer", "minimum": 0, "description": "Repository id (its seed)."});
        let mut out = vec![
            json!({
                "name": LIST_DIRECTORY,
                "description": "List files and directories under a path prefix. The prefix accepts the wildcards * and ?. Entries are returned as full paths, at most `depth` levels below the match.",
                "inputSchema": {
                    "type": "object",
                    "properties": {
                        "id": id,
                        "prefix": {"type": "string", "default": "/"},
                        "depth": {"type": "integer", "minimum": 1, "default": 1}
                    },
                    "required": ["id", "prefix"]
                }
            }),
            json!({
                "name": READ_TEXT_FILE,
                "description": "Read a text file. `head` keeps the first lines and `tail` the last lines of what remains.",
                "inputSchema": {
                    "type": "object",
                    "properties": {
                        "id": id,
                        "path": {"type": "string"},
                        "head": {"type": "integer", "minimum": 0},
                        "tail": {"type": "integer", "minimum": 0}
                    },
                    "required": ["id", "path"]
                }
            }),
            json!({
                "name": READ_BINARY_FILE,
                "description": "Read any file as base64 along with its MIME type.",
                "inputSchema": {
                    "type": "object",
                    "properties": {"id": id, "path": {"type": "string"}},
                    "required": ["id", "path"]
                }
            }),
        ];
        let mut names: Vec<&String> = self.external.keys().collect();
        names.sort();
        for n in names {
            let t = &self.external[n];
            out.push(json!({"name": t.name(), "description": t.description(), "inputSchema": t.input_schema()}));
        }
        out
    }
}

/// Descriptor for mounting a code interpreter under the reserved name.
pub fn python_tool_schema() -> Json {
    json!({
        "type": "object",
        "properties": {"code": {"type": "string"}},
        "required": ["code"],
        "x-limits": {"time_seconds": PYTHON_TIME_LIMIT_SECS, "memory_mb": PYTHON_MEMORY_LIMIT_MB}
    })
}

pub fn mime_type(path: &str) -> &'static str {
    match Extension::of_path(path) {
        Some(e) => e.mime_type(),
        None if path.ends_with(".md") => "text/markdown",
        None => "application/octet-stream",
    }
}

fn arg_id(args: &Json) -> Result<u64, String> {
    match args.get("id") {
        Some(Json::Number(n)) => n
            .as_u64()
            .ok_or_else(|| format!("id must be a non-negative 64-bit integer, got {n}")),
        Some(other) => Err(format!("id must be an integer, got {other}")),
        None => Err("missing argument \"id\"".into()),
    }
}

fn arg_str<'a>(args: &'a Json, key: &str) -> Result<Option<&'a str>, String> {
    match args.get(key) {
        None | Some(Json::Null) => Ok(None),
        Some(Json::String(s)) => Ok(Some(s)),
        Some(other) => Err(format!("{key} must be a string, got {other}")),
    }
}

fn arg_usize(args: &Json, key: &str) -> Result<Option<usize>, String> {
    match args.get(key) {
        None | Some(Json::Null) => Ok(None),
        Some(Json::Number(n)) => n
            .as_u64()
            .map(|v| Some(v as usize))
            .ok_or_else(|| format!("{key} must be a non-negative integer, got {n}")),
        Some(other) => Err(format!("{key} must be an integer, got {other}")),
    }
}
