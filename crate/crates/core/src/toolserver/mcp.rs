//! Model Context Protocol adapter: newline-delimited JSON-RPC 2.0 over a
//! reader/writer pair, usually stdin and stdout.

use std::io::{self, BufRead, Write};

use serde_json::{json, Value as Json};

use super::ToolService;

pub const PROTOCOL_VERSION: &str = "2024-11-05";

fn rpc_error(id: Json, code: i64, message: &str) -> Json {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": code, "message": message}})
}

/// Reply to one JSON-RPC message; notifications get `None`.
pub fn handle_message(service: &ToolService, msg: &Json) -> Option<Json> {
    let id = msg.get("id").cloned()?;
    let method = msg.get("method").and_then(Json::as_str).unwrap_or_default();
    let ok = |result: Json| Some(json!({"jsonrpc": "2.0", "id": id.clone(), "result": result}));
    match method {
        "initialize" => ok(json!({
            "protocolVersion": PROTOCOL_VERSION,
            "capabilities": {"tools": {}},
            "serverInfo": {"name": "reposim", "version": env!("CARGO_PKG_VERSION")}
        })),
        "ping" => ok(json!({})),
        "tools/list" => ok(json!({"tools": service.tool_descriptors()})),
        "tools/call" => {
            let params = msg.get("params").cloned().unwrap_or(Json::Null);
            let Some(name) = params.get("name").and_then(Json::as_str) else {
                return Some(rpc_error(id, -32602, "tools/call needs a tool name"));
            };
            let args = params.get("arguments").cloned().unwrap_or_else(|| json!({}));
            let reply = service.call(name, &args);
            let text = String::from_utf8(reply.to_bytes()).expect("envelopes are UTF-8");
            ok(json!({"content": [{"type": "text", "text": text}], "isError": reply.is_error()}))
        }
        _ => Some(rpc_error(id, -32601, &format!("method not found: {method}"))),
    }
}

/// Serve until `input` ends.
pub fn run<R: BufRead, W: Write>(service: &ToolService, input: R, mut output: W) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Json>(&line) {
            Ok(msg) => handle_message(service, &msg),
            Err(e) => Some(rpc_error(Json::Null, -32700, &format!("parse error: {e}"))),
        };
        if let Some(r) = reply {
            serde_json::to_writer(&mut output, &r)?;
            output.write_all(b"\n")?;
            output.flush()?;
        }
    }
    Ok(())
}
