//! Minimal single-sheet workbook writer and reader. The archive uses the
//! stored (uncompressed) method and a fixed timestamp so output bytes depend
//! only on the table.

use thiserror::Error;

use crate::value::Value;

pub const SHEET_NAME: &str = "data";
const SHEET_PATH: &str = "xl/worksheets/sheet1.xml";
// 1980-01-01 00:00:00 in MS-DOS format.
const DOS_TIME: u16 = 0;
const DOS_DATE: u16 = (1 << 5) | 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum XlsxError {
    #[error("not a zip archive: {0}")]
    Archive(String),
    #[error("unsupported compression method {0}")]
    Compression(u16),
    #[error("worksheet missing")]
    MissingSheet,
    #[error("malformed worksheet: {0}")]
    Sheet(String),
}

const CONTENT_TYPES: &str = r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types"><Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/><Default Extension="xml" ContentType="application/xml"/><Override PartName="/xl/workbook.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml"/><Override PartName="/xl/worksheets/sheet1.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml"/><Override PartName="/xl/styles.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.styles+xml"/></Types>"#;

const ROOT_RELS: &str = r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships"><Relationship Id="rId1" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument" Target="xl/workbook.xml"/></Relationships>"#;

const WORKBOOK_RELS: &str = r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships"><Relationship Id="rId1" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet" Target="worksheets/sheet1.xml"/><Relationship Id="rId2" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/styles" Target="styles.xml"/></Relationships>"#;

const STYLES: &str = r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<styleSheet xmlns="http://schemas.openxmlformats.org/spreadsheetml/2006/main"><fonts count="1"><font><sz val="11"/><name val="Calibri"/></font></fonts><fills count="2"><fill><patternFill patternType="none"/></fill><fill><patternFill patternType="gray125"/></fill></fills><borders count="1"><border><left/><right/><top/><bottom/><diagonal/></border></borders><cellStyleXfs count="1"><xf numFmtId="0" fontId="0" fillId="0" borderId="0"/></cellStyleXfs><cellXfs count="1"><xf numFmtId="0" fontId="0" fillId="0" borderId="0" xfId="0"/></cellXfs></styleSheet>"#;

fn workbook_xml() -> String {
    format!(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<workbook xmlns="http://schemas.openxmlformats.org/spreadsheetml/2006/main" xmlns:r="http://schemas.openxmlformats.org/officeDocument/2006/relationships"><sheets><sheet name="{SHEET_NAME}" sheetId="1" r:id="rId1"/></sheets></workbook>"#
    )
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_xml(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        let end = tail.find(';').unwrap_or(0);
        let entity = &tail[1..end.max(1)];
        let decoded = match entity {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            e if e.starts_with("#x") => u32::from_str_radix(&e[2..], 16).ok().and_then(char::from_u32),
            e if e.starts_with('#') => e[1..].parse().ok().and_then(char::from_u32),
            _ => None,
        };
        match decoded {
            Some(c) if end > 0 => {
                out.push(c);
                rest = &tail[end + 1..];
            }
            _ => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn column_letters(mut idx: usize) -> String {
    let mut letters = Vec::new();
    loop {
        letters.push(b'A' + (idx % 26) as u8);
        if idx < 26 {
            break;
        }
        idx = idx / 26 - 1;
    }
    letters.reverse();
    String::from_utf8(letters).expect("ascii")
}

fn column_index(letters: &str) -> Option<usize> {
    let mut n = 0usize;
    for b in letters.bytes() {
        if !b.is_ascii_uppercase() {
            return None;
        }
        n = n * 26 + (b - b'A' + 1) as usize;
    }
    n.checked_sub(1)
}

fn string_cell(r: &str, s: &str) -> String {
    let space = if s.starts_with(char::is_whitespace) || s.ends_with(char::is_whitespace) {
        r#" xml:space="preserve""#
    } else {
        ""
    };
    format!(r#"<c r="{r}" t="inlineStr"><is><t{space}>{}</t></is></c>"#, escape_xml(s))
}

fn sheet_xml(header: &[String], rows: &[Vec<&Value>]) -> String {
    let mut out = String::from(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<worksheet xmlns="http://schemas.openxmlformats.org/spreadsheetml/2006/main"><sheetData>"#,
    );
    let mut push_row = |n: usize, cells: Vec<String>| {
        out.push_str(&format!(r#"<row r="{n}">"#));
        for c in cells {
            out.push_str(&c);
        }
        out.push_str("</row>");
    };
    push_row(
        1,
        header
            .iter()
            .enumerate()
            .map(|(j, h)| string_cell(&format!("{}1", column_letters(j)), h))
            .collect(),
    );
    for (i, row) in rows.iter().enumerate() {
        let n = i + 2;
        let cells = row
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let r = format!("{}{n}", column_letters(j));
                match v {
                    Value::Str(s) => string_cell(&r, s),
                    other => format!(r#"<c r="{r}"><v>{}</v></c>"#, other.render()),
                }
            })
            .collect();
        push_row(n, cells);
    }
    out.push_str("</sheetData></worksheet>");
    out
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn zip_stored(entries: &[(&str, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut central = Vec::new();
    for (name, data) in entries {
        let offset = out.len() as u32;
        let crc = crc32fast::hash(data);
        let size = data.len() as u32;
        put_u32(&mut out, 0x0403_4b50);
        put_u16(&mut out, 20);
        put_u16(&mut out, 0);
        put_u16(&mut out, 0);
        put_u16(&mut out, DOS_TIME);
        put_u16(&mut out, DOS_DATE);
        put_u32(&mut out, crc);
        put_u32(&mut out, size);
        put_u32(&mut out, size);
        put_u16(&mut out, name.len() as u16);
        put_u16(&mut out, 0);
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(data);

        put_u32(&mut central, 0x0201_4b50);
        put_u16(&mut central, 20);
        put_u16(&mut central, 20);
        put_u16(&mut central, 0);
        put_u16(&mut central, 0);
        put_u16(&mut central, DOS_TIME);
        put_u16(&mut central, DOS_DATE);
        put_u32(&mut central, crc);
        put_u32(&mut central, size);
        put_u32(&mut central, size);
        put_u16(&mut central, name.len() as u16);
        put_u16(&mut central, 0);
        put_u16(&mut central, 0);
        put_u16(&mut central, 0);
        put_u16(&mut central, 0);
        put_u32(&mut central, 0);
        put_u32(&mut central, offset);
        central.extend_from_slice(name.as_bytes());
    }
    let cd_offset = out.len() as u32;
    let cd_size = central.len() as u32;
    out.extend_from_slice(&central);
    put_u32(&mut out, 0x0605_4b50);
    put_u16(&mut out, 0);
    put_u16(&mut out, 0);
    put_u16(&mut out, entries.len() as u16);
    put_u16(&mut out, entries.len() as u16);
    put_u32(&mut out, cd_size);
    put_u32(&mut out, cd_offset);
    put_u16(&mut out, 0);
    out
}

/// Workbook with one sheet named `data`: the header row, then `rows`.
pub fn write_workbook(header: &[String], rows: &[Vec<&Value>]) -> Vec<u8> {
    zip_stored(&[
        ("[Content_Types].xml", CONTENT_TYPES.as_bytes().to_vec()),
        ("_rels/.rels", ROOT_RELS.as_bytes().to_vec()),
        ("xl/workbook.xml", workbook_xml().into_bytes()),
        ("xl/_rels/workbook.xml.rels", WORKBOOK_RELS.as_bytes().to_vec()),
        ("xl/styles.xml", STYLES.as_bytes().to_vec()),
        (SHEET_PATH, sheet_xml(header, rows).into_bytes()),
    ])
}

fn u16_at(b: &[u8], i: usize) -> Result<u16, XlsxError> {
    b.get(i..i + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| XlsxError::Archive("truncated".into()))
}

fn u32_at(b: &[u8], i: usize) -> Result<u32, XlsxError> {
    b.get(i..i + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| XlsxError::Archive("truncated".into()))
}

/// Stored entry `name` from a zip archive, located through the central
/// directory.
fn zip_entry<'a>(bytes: &'a [u8], name: &str) -> Result<Option<&'a [u8]>, XlsxError> {
    let eocd = (0..bytes.len().saturating_sub(21))
        .rev()
        .find(|&i| bytes[i..].starts_with(&[0x50, 0x4b, 0x05, 0x06]))
        .ok_or_else(|| XlsxError::Archive("no end of central directory".into()))?;
    let count = u16_at(bytes, eocd + 10)? as usize;
    let mut p = u32_at(bytes, eocd + 16)? as usize;
    for _ in 0..count {
        if u32_at(bytes, p)? != 0x0201_4b50 {
            return Err(XlsxError::Archive("bad central directory entry".into()));
        }
        let method = u16_at(bytes, p + 10)?;
        let size = u32_at(bytes, p + 20)? as usize;
        let name_len = u16_at(bytes, p + 28)? as usize;
        let extra_len = u16_at(bytes, p + 30)? as usize;
        let comment_len = u16_at(bytes, p + 32)? as usize;
        let local = u32_at(bytes, p + 42)? as usize;
        let entry_name = bytes
            .get(p + 46..p + 46 + name_len)
            .ok_or_else(|| XlsxError::Archive("truncated".into()))?;
        if entry_name == name.as_bytes() {
            if method != 0 {
                return Err(XlsxError::Compression(method));
            }
            let lname = u16_at(bytes, local + 26)? as usize;
            let lextra = u16_at(bytes, local + 28)? as usize;
            let start = local + 30 + lname + lextra;
            return bytes
                .get(start..start + size)
                .map(Some)
                .ok_or_else(|| XlsxError::Archive("truncated entry".into()));
        }
        p += 46 + name_len + extra_len + comment_len;
    }
    Ok(None)
}

fn attr<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = tag.find(&key)? + key.len();
    let len = tag[start..].find('"')?;
    Some(&tag[start..start + len])
}

fn inner<'a>(xml: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let s = xml.find(open)?;
    let body_start = s + xml[s..].find('>')? + 1;
    if xml[s..body_start].ends_with("/>") {
        return Some("");
    }
    let len = xml[body_start..].find(close)?;
    Some(&xml[body_start..body_start + len])
}

/// Cell text of the first worksheet, row-major, as written by
/// [`write_workbook`]. Gaps in a row become empty strings.
pub fn read_xlsx_cells(bytes: &[u8]) -> Result<Vec<Vec<String>>, XlsxError> {
    let sheet = zip_entry(bytes, SHEET_PATH)?.ok_or(XlsxError::MissingSheet)?;
    let xml = std::str::from_utf8(sheet).map_err(|e| XlsxError::Sheet(e.to_string()))?;
    let mut rows = Vec::new();
    let mut rest = xml;
    while let Some(start) = rest.find("<row") {
        let end = rest[start..]
            .find("</row>")
            .ok_or_else(|| XlsxError::Sheet("unterminated row".into()))?
            + start;
        let row_xml = &rest[start..end];
        let mut cells: Vec<String> = Vec::new();
        let mut crest = row_xml;
        while let Some(cs) = crest.find("<c ") {
            let tag_end = crest[cs..].find('>').ok_or_else(|| XlsxError::Sheet("bad cell".into()))? + cs;
            let tag = &crest[cs..=tag_end];
            let (body, next) = if tag.ends_with("/>") {
                ("", tag_end + 1)
            } else {
                let ce = crest[tag_end..]
                    .find("</c>")
                    .ok_or_else(|| XlsxError::Sheet("unterminated cell".into()))?
                    + tag_end;
                (&crest[tag_end + 1..ce], ce + 4)
            };
            let text = match attr(tag, "t") {
                Some("inlineStr") => inner(body, "<t", "</t>").unwrap_or(""),
                _ => inner(body, "<v", "</v>").unwrap_or(""),
            };
            let col = attr(tag, "r")
                .and_then(|r| column_index(r.trim_end_matches(|c: char| c.is_ascii_digit())))
                .unwrap_or(cells.len());
            while cells.len() < col {
                cells.push(String::new());
            }
            cells.push(unescape_xml(text));
            crest = &crest[next..];
        }
        rows.push(cells);
        rest = &rest[end + 6..];
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_letters_round_trip() {
        for (i, s) in [(0, "A"), (25, "Z"), (26, "AA"), (27, "AB"), (701, "ZZ"), (702, "AAA")] {
            assert_eq!(column_letters(i), s);
            assert_eq!(column_index(s), Some(i));
        }
    }

    #[test]
    fn workbook_round_trips() {
        let header = vec!["name".to_string(), "x".to_string()];
        let a = Value::Str("a & <b>".into());
        let b = Value::Real(1.5);
        let c = Value::Str(" padded ".into());
        let d = Value::Int(-3);
        let bytes = write_workbook(&header, &[vec![&a, &b], vec![&c, &d]]);
        assert_eq!(&bytes[..4], b"PK\x03\x04");
        let cells = read_xlsx_cells(&bytes).unwrap();
        assert_eq!(cells, vec![vec!["name", "x"], vec!["a & <b>", "1.5"], vec![" padded ", "-3"]]);
    }

    #[test]
    fn entities_decode() {
        assert_eq!(unescape_xml("a&amp;b&#65;&#x42;&bogus"), "a&bAB&bogus");
    }
}
