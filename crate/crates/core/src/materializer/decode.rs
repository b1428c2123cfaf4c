//! Readers for the six encodings, returning cell text.

use std::fmt;

use serde::de::{Deserialize, Deserializer, MapAccess, Visitor};
use serde_json::Value as Json;
use thiserror::Error;

use super::xlsx::read_xlsx_cells;
use crate::repospec::Extension;
use crate::value::format_real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot decode {format}: {message}")]
pub struct DecodeError {
    pub format: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodedTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl DecodedTable {
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j].as_str()).collect())
    }
}

fn err(format: &'static str, message: impl Into<String>) -> DecodeError {
    DecodeError {
        format,
        message: message.into(),
    }
}

pub fn decode_table(bytes: &[u8], extension: Extension) -> Result<DecodedTable, DecodeError> {
    if extension == Extension::Xlsx {
        let mut cells = read_xlsx_cells(bytes).map_err(|e| err("xlsx", e.to_string()))?;
        if cells.is_empty() {
            return Err(err("xlsx", "no header row"));
        }
        let header = cells.remove(0);
        for r in &mut cells {
            r.resize(header.len(), String::new());
        }
        return Ok(DecodedTable { header, rows: cells });
    }
    let text = std::str::from_utf8(bytes).map_err(|e| err(extension.as_str(), e.to_string()))?;
    match extension {
        Extension::Csv => decode_csv(text),
        Extension::Json => decode_json(text),
        Extension::Jsonl => decode_jsonl(text),
        Extension::Txt => decode_txt(text),
        Extension::Log => decode_log(text),
        Extension::Xlsx => unreachable!(),
    }
}

fn decode_csv(text: &str) -> Result<DecodedTable, DecodeError> {
    let mut records: Vec<Vec<String>> = Vec::new();
    let mut record = Vec::new();
    let mut field = String::new();
    let mut chars = text.chars().peekable();
    let mut quoted = false;
    let mut at_field_start = true;
    while let Some(c) = chars.next() {
        if quoted {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    field.push('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push(c);
            }
            continue;
        }
        match c {
            '"' if at_field_start => {
                quoted = true;
                at_field_start = false;
            }
            ',' => {
                record.push(std::mem::take(&mut field));
                at_field_start = true;
            }
            '\n' => {
                record.push(std::mem::take(&mut field));
                records.push(std::mem::take(&mut record));
                at_field_start = true;
            }
            '\r' if chars.peek() == Some(&'\n') => {}
            c => {
                field.push(c);
                at_field_start = false;
            }
        }
    }
    if quoted {
        return Err(err("csv", "unterminated quoted field"));
    }
    if !at_field_start || !record.is_empty() {
        record.push(field);
        records.push(record);
    }
    let mut it = records.into_iter();
    let header = it.next().ok_or_else(|| err("csv", "no header row"))?;
    let rows: Vec<Vec<String>> = it.collect();
    if let Some(r) = rows.iter().find(|r| r.len() != header.len()) {
        return Err(err("csv", format!("row has {} fields, header has {}", r.len(), header.len())));
    }
    Ok(DecodedTable { header, rows })
}

/// A JSON object with its key order preserved.
struct OrderedObject(Vec<(String, Json)>);

impl<'de> Deserialize<'de> for OrderedObject {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OrderedObject;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<OrderedObject, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Json>()? {
                    out.push((k, v));
                }
                Ok(OrderedObject(out))
            }
        }
        d.deserialize_map(V)
    }
}

fn json_cell(v: &Json) -> Result<String, String> {
    match v {
        Json::String(s) => Ok(s.clone()),
        Json::Number(n) => Ok(match n.as_i64() {
            Some(i) => i.to_string(),
            None => format_real(n.as_f64().ok_or("number out of range")?),
        }),
        other => Err(format!("unexpected cell {other}")),
    }
}

fn objects_to_table(format: &'static str, objects: Vec<OrderedObject>) -> Result<DecodedTable, DecodeError> {
    let header: Vec<String> = objects
        .first()
        .map(|o| o.0.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    let mut rows = Vec::with_capacity(objects.len());
    for o in objects {
        let keys: Vec<&String> = o.0.iter().map(|(k, _)| k).collect();
        if keys.len() != header.len() || keys.iter().zip(&header).any(|(a, b)| *a != b) {
            return Err(err(format, "rows do not share the same keys"));
        }
        rows.push(
            o.0.iter()
                .map(|(_, v)| json_cell(v))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|m| err(format, m))?,
        );
    }
    Ok(DecodedTable { header, rows })
}

fn decode_json(text: &str) -> Result<DecodedTable, DecodeError> {
    let objects: Vec<OrderedObject> = serde_json::from_str(text).map_err(|e| err("json", e.to_string()))?;
    objects_to_table("json", objects)
}

fn decode_jsonl(text: &str) -> Result<DecodedTable, DecodeError> {
    let objects = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str::<OrderedObject>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| err("jsonl", e.to_string()))?;
    objects_to_table("jsonl", objects)
}

fn decode_txt(text: &str) -> Result<DecodedTable, DecodeError> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| err("txt", "no header row"))?
        .split('\t')
        .map(str::to_string)
        .collect();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split('\t').map(str::to_string).collect()).collect();
    if rows.iter().any(|r| r.len() != header.len()) {
        return Err(err("txt", "ragged row"));
    }
    Ok(DecodedTable { header, rows })
}

/// Split one log line into `(name, value)` pairs after the row index.
pub(crate) fn parse_log_line(line: &str) -> Result<(usize, Vec<(String, String)>), String> {
    let (idx, mut rest) = line.split_once(' ').unwrap_or((line, ""));
    let idx: usize = idx.parse().map_err(|_| format!("bad row index {idx:?}"))?;
    let mut pairs = Vec::new();
    while !rest.is_empty() {
        let eq = rest.find('=').ok_or("field without '='")?;
        let name = rest[..eq].to_string();
        rest = &rest[eq + 1..];
        let value;
        if rest.starts_with('"') {
            let mut end = None;
            let mut escaped = false;
            for (i, c) in rest.char_indices().skip(1) {
                match c {
                    '\\' if !escaped => escaped = true,
                    '"' if !escaped => {
                        end = Some(i);
                        break;
                    }
                    _ => escaped = false,
                }
            }
            let end = end.ok_or("unterminated quoted value")?;
            value = serde_json::from_str::<String>(&rest[..=end]).map_err(|e| e.to_string())?;
            rest = &rest[end + 1..];
        } else {
            let end = rest.find(' ').unwrap_or(rest.len());
            value = rest[..end].to_string();
            rest = &rest[end..];
        }
        pairs.push((name, value));
        rest = rest.strip_prefix(' ').unwrap_or(rest);
    }
    Ok((idx, pairs))
}

fn decode_log(text: &str) -> Result<DecodedTable, DecodeError> {
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let (idx, pairs) = parse_log_line(line).map_err(|m| err("log", m))?;
        if idx != n {
            return Err(err("log", format!("row index {idx} on line {n}")));
        }
        let names: Vec<String> = pairs.iter().map(|(k, _)| k.clone()).collect();
        match &header {
            None => header = Some(names),
            Some(h) if *h != names => return Err(err("log", "rows do not share the same fields")),
            _ => {}
        }
        rows.push(pairs.into_iter().map(|(_, v)| v).collect());
    }
    Ok(DecodedTable {
        header: header.ok_or_else(|| err("log", "empty log"))?,
        rows,
    })
}
