use super::populate::TableData;
use super::xlsx;
use crate::repospec::Extension;
use crate::value::Value;

/// Encode `table` in the on-disk format for `extension`.
pub fn encode_table(table: &TableData, extension: Extension) -> Vec<u8> {
    match extension {
        Extension::Csv => encode_csv(table).into_bytes(),
        Extension::Json => encode_json(table).into_bytes(),
        Extension::Jsonl => encode_jsonl(table).into_bytes(),
        Extension::Txt => encode_txt(table).into_bytes(),
        Extension::Log => encode_log(table).into_bytes(),
        Extension::Xlsx => {
            let header: Vec<String> = table.header().iter().map(|s| s.to_string()).collect();
            let rows: Vec<Vec<&Value>> = (0..table.n_rows)
                .map(|r| table.columns.iter().map(|c| &c.values[r]).collect())
                .collect();
            xlsx::write_workbook(&header, &rows)
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.is_empty() || s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn json_cell(v: &Value) -> String {
    match v {
        Value::Str(s) => json_string(s),
        other => other.render(),
    }
}

fn encode_csv(table: &TableData) -> String {
    let mut out = String::new();
    let header: Vec<String> = table.header().iter().map(|h| csv_field(h)).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..table.n_rows {
        let row: Vec<String> = table.columns.iter().map(|c| csv_field(&c.values[r].render())).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn encode_json(table: &TableData) -> String {
    let mut out = String::from("[\n");
    for r in 0..table.n_rows {
        out.push_str("  {\n");
        let last = table.columns.len().saturating_sub(1);
        for (i, c) in table.columns.iter().enumerate() {
            out.push_str("    ");
            out.push_str(&json_string(&c.variable.name));
            out.push(':');
            out.push_str(&json_cell(&c.values[r]));
            out.push_str(if i == last { "\n" } else { ",\n" });
        }
        out.push_str(if r + 1 == table.n_rows { "  }\n" } else { "  },\n" });
    }
    out.push_str("]\n");
    out
}

fn encode_jsonl(table: &TableData) -> String {
    let mut out = String::new();
    for r in 0..table.n_rows {
        let fields: Vec<String> = table
            .columns
            .iter()
            .map(|c| format!("{}:{}", json_string(&c.variable.name), json_cell(&c.values[r])))
            .collect();
        out.push('{');
        out.push_str(&fields.join(","));
        out.push_str("}\n");
    }
    out
}

fn encode_txt(table: &TableData) -> String {
    let mut out = table.header().join("\t");
    out.push('\n');
    for r in 0..table.n_rows {
        let row: Vec<String> = table.columns.iter().map(|c| c.values[r].render()).collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Log values are bare unless they are empty or contain whitespace, quotes
/// or `=`, in which case they are JSON string literals.
pub(crate) fn log_value(s: &str) -> String {
    if s.is_empty() || s.contains(|c: char| c.is_whitespace() || c == '"' || c == '=') {
        json_string(s)
    } else {
        s.to_string()
    }
}

fn encode_log(table: &TableData) -> String {
    let mut out = String::new();
    for r in 0..table.n_rows {
        out.push_str(&r.to_string());
        for c in &table.columns {
            out.push(' ');
            out.push_str(&c.variable.name);
            out.push('=');
            out.push_str(&log_value(&c.values[r].render()));
        }
        out.push('\n');
    }
    out
}
