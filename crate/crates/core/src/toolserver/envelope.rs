use std::io;

use serde::{Deserialize, Serialize};

/// Response envelope. Field order is part of the wire format: `status`
/// always comes first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ToolResponse {
    Paths { status: String, paths: Vec<String> },
    Text { status: String, file_content: String },
    Binary { status: String, content_base64: String, mime_type: String },
    Error { status: String, message: String },
}

const SUCCESS: &str = "success";
const ERROR: &str = "error";

impl ToolResponse {
    pub fn paths(paths: Vec<String>) -> Self {
        ToolResponse::Paths {
            status: SUCCESS.into(),
            paths,
        }
    }

    pub fn text(file_content: String) -> Self {
        ToolResponse::Text {
            status: SUCCESS.into(),
            file_content,
        }
    }

    pub fn binary(content_base64: String, mime_type: String) -> Self {
        ToolResponse::Binary {
            status: SUCCESS.into(),
            content_base64,
            mime_type,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        ToolResponse::Error {
            status: ERROR.into(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, ToolResponse::Error { .. })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        to_python_json(self)
    }
}

/// JSON with `", "` and `": "` separators and every character outside
/// printable ASCII escaped, as Python's `json.dumps` writes by default.
struct PythonFormatter;

impl serde_json::ser::Formatter for PythonFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn write_string_fragment<W: ?Sized + io::Write>(&mut self, w: &mut W, fragment: &str) -> io::Result<()> {
        if fragment.bytes().all(|b| (0x20..0x7f).contains(&b)) {
            return w.write_all(fragment.as_bytes());
        }
        let mut units = [0u16; 2];
        for c in fragment.chars() {
            if (' '..='~').contains(&c) {
                w.write_all(&[c as u8])?;
            } else {
                for u in c.encode_utf16(&mut units) {
                    write!(w, "\\u{u:04x}")?;
                }
            }
        }
        Ok(())
    }
}

pub fn to_python_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, PythonFormatter);
    value.serialize(&mut ser).expect("envelopes always serialize");
    out
}
