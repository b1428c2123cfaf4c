//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's samplers, encoders or decoders.
#![allow(dead_code)]

pub mod grading;
pub mod truth;
pub mod wire;

use std::io::Write;
use std::process::{Command, Stdio};

use reposim::genmodel::Generator;
use reposim::repospec::{build_repository_spec, BuildParams, Repository};
use reposim::taxonomy::Taxonomy;
use sha2::{Digest, Sha256};

pub fn stub_repo(seed: u64) -> Repository {
    let spec = build_repository_spec(seed, &Taxonomy::bundled(), &BuildParams::default(), &Generator::stub())
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    Repository::new(spec)
}

/// splitmix64, written out from its published constants.
pub struct Replay(u64);

impl Replay {
    pub fn for_path(path: &str) -> Self {
        let d = Sha256::digest(path.as_bytes());
        Replay(u64::from_be_bytes(d[..8].try_into().unwrap()))
    }

    pub fn for_stage(seed: u64, label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(label.as_bytes());
        h.update([0]);
        h.update(seed.to_string().as_bytes());
        let d = h.finalize();
        Replay(u64::from_be_bytes(d[..8].try_into().unwrap()))
    }

    pub fn u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    pub fn gauss(&mut self) -> f64 {
        let (a, b) = (self.unit(), self.unit());
        (-2.0 * (1.0 - a).ln()).sqrt() * (std::f64::consts::TAU * b).cos()
    }
}

/// Row count a file must have, replayed from its path alone.
pub fn expected_rows(path: &str, mu: f64, sigma: f64) -> usize {
    let z = Replay::for_path(path).gauss();
    let x = (mu + sigma * z).round_ties_even();
    if x < 1.0 {
        1
    } else {
        x as usize
    }
}

pub type Table = (Vec<String>, Vec<Vec<String>>);

/// Read an encoded table without the library's decoders.
pub fn read_independent(bytes: &[u8], ext: &str) -> Table {
    match ext {
        "csv" => {
            let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
            let header = r.headers().unwrap().iter().map(str::to_string).collect();
            let rows = r
                .records()
                .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
                .collect();
            (header, rows)
        }
        "json" => {
            let text = std::str::from_utf8(bytes).unwrap();
            let header = object_keys(text.lines().skip(2).take_while(|l| !l.starts_with("  }")));
            let v: Vec<serde_json::Map<String, serde_json::Value>> = serde_json::from_str(text).unwrap();
            let rows = v.iter().map(|o| header.iter().map(|k| cell(&o[k])).collect()).collect();
            (header, rows)
        }
        "jsonl" => {
            let text = std::str::from_utf8(bytes).unwrap();
            let first = text.lines().next().unwrap();
            let header = first_object_keys(first);
            let rows = text
                .lines()
                .map(|l| {
                    let o: serde_json::Map<String, serde_json::Value> = serde_json::from_str(l).unwrap();
                    header.iter().map(|k| cell(&o[k])).collect()
                })
                .collect();
            (header, rows)
        }
        "txt" => {
            let text = std::str::from_utf8(bytes).unwrap();
            let mut lines = text.strip_suffix('\n').unwrap().split('\n');
            let header = lines.next().unwrap().split('\t').map(str::to_string).collect();
            (header, lines.map(|l| l.split('\t').map(str::to_string).collect()).collect())
        }
        "log" => {
            let text = std::str::from_utf8(bytes).unwrap();
            let mut header = Vec::new();
            let mut rows = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let pairs = log_pairs(line, i);
                if i == 0 {
                    header = pairs.iter().map(|p| p.0.clone()).collect();
                }
                rows.push(pairs.into_iter().map(|p| p.1).collect());
            }
            (header, rows)
        }
        "xlsx" => read_xlsx_with_python(bytes),
        other => panic!("unknown extension {other}"),
    }
}

fn cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.to_string()
            } else {
                let x = n.as_f64().unwrap();
                let s = format!("{x}");
                if s.contains('.') {
                    s
                } else {
                    format!("{s}.0")
                }
            }
        }
        other => panic!("unexpected {other}"),
    }
}

fn object_keys<'a>(lines: impl Iterator<Item = &'a str>) -> Vec<String> {
    lines
        .map(|l| {
            let l = l.trim_start();
            let end = l[1..].find('"').unwrap() + 1;
            serde_json::from_str(&l[..=end]).unwrap()
        })
        .collect()
}

/// Keys of a compact one-line object, in textual order.
fn first_object_keys(line: &str) -> Vec<String> {
    let mut keys = Vec::new();
    let bytes: Vec<char> = line.chars().collect();
    let mut i = 1;
    let mut expecting_key = true;
    while i < bytes.len() {
        match bytes[i] {
            '"' => {
                let start = i;
                i += 1;
                while bytes[i] != '"' {
                    if bytes[i] == '\\' {
                        i += 1;
                    }
                    i += 1;
                }
                if expecting_key {
                    let s: String = bytes[start..=i].iter().collect();
                    keys.push(serde_json::from_str(&s).unwrap());
                    expecting_key = false;
                }
            }
            ',' => expecting_key = true,
            _ => {}
        }
        i += 1;
    }
    keys
}

fn log_pairs(line: &str, idx: usize) -> Vec<(String, String)> {
    let prefix = format!("{idx} ");
    let mut rest = line.strip_prefix(&prefix).expect("row index prefix");
    let mut out = Vec::new();
    while !rest.is_empty() {
        let (name, tail) = rest.split_once('=').unwrap();
        if tail.starts_with('"') {
            let mut de = serde_json::Deserializer::from_str(tail).into_iter::<String>();
            let v = de.next().unwrap().unwrap();
            let used = de.byte_offset();
            out.push((name.to_string(), v));
            rest = tail[used..].trim_start_matches(' ');
        } else {
            let (v, r) = tail.split_once(' ').unwrap_or((tail, ""));
            out.push((name.to_string(), v.to_string()));
            rest = r;
        }
    }
    out
}

const PY_XLSX: &str = r#"
import sys, zipfile, io, json, re
import xml.etree.ElementTree as ET
ns = {'m': 'http://schemas.openxmlformats.org/spreadsheetml/2006/main'}
z = zipfile.ZipFile(io.BytesIO(sys.stdin.buffer.read()))
assert z.testzip() is None
wb = ET.fromstring(z.read('xl/workbook.xml'))
names = [s.get('name') for s in wb.find('m:sheets', ns)]
assert names == ['data'], names
root = ET.fromstring(z.read('xl/worksheets/sheet1.xml'))
rows = []
for row in root.iter('{%s}row' % ns['m']):
    cells = []
    for c in row.findall('m:c', ns):
        if c.get('t') == 'inlineStr':
            cells.append(''.join(t.text or '' for t in c.iter('{%s}t' % ns['m'])))
        else:
            cells.append(c.find('m:v', ns).text)
    rows.append(cells)
print(json.dumps(rows))
"#;

pub fn read_xlsx_with_python(bytes: &[u8]) -> Table {
    let mut child = Command::new("python3")
        .args(["-c", PY_XLSX])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .expect("python3 is needed for the xlsx oracle");
    child.stdin.take().unwrap().write_all(bytes).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "python xlsx reader failed");
    let mut rows: Vec<Vec<String>> = serde_json::from_slice(&out.stdout).unwrap();
    let header = rows.remove(0);
    (header, rows)
}

const PY_REDUMP: &str = r#"
import json, sys
for line in sys.stdin.buffer.read().split(b"\n"):
    if line:
        s = line.decode("ascii")
        print("same" if json.dumps(json.loads(s)) == s else "diff")
"#;

/// For each newline-free JSON document, whether Python's default
/// `json.dumps` reproduces it byte for byte.
pub fn python_redumps_identically(docs: &[Vec<u8>]) -> Vec<bool> {
    let mut child = Command::new("python3")
        .args(["-c", PY_REDUMP])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .expect("python3 is needed for the envelope oracle");
    let mut input = Vec::new();
    for d in docs {
        assert!(!d.contains(&b'\n'), "envelopes are single-line");
        input.extend_from_slice(d);
        input.push(b'\n');
    }
    child.stdin.take().unwrap().write_all(&input).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "python redump failed");
    String::from_utf8(out.stdout).unwrap().lines().map(|l| l == "same").collect()
}
