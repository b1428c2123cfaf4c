//! Read-only virtual filesystem over a repository. Listings come from the
//! path index; file bytes are generated on each read.

use std::collections::BTreeSet;
use std::ops::Bound;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use super::encode::encode_table;
use super::populate::{populate_file, MaterializeError};
use super::readme::{render_readme, README_PATH};
use crate::repospec::{Extension, Repository};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VfsError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("invalid pattern {pattern:?}: {reason}")]
    InvalidPattern { pattern: String, reason: String },
    #[error(transparent)]
    Materialize(#[from] MaterializeError),
}

/// Shell-style match of one path segment: `*` is any run, `?` one character.
pub fn glob_segment(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|c| *c == '*')
}

fn has_wildcard(s: &str) -> bool {
    s.contains(['*', '?'])
}

/// Strip `/`, `./` and trailing slashes; `None` means the root.
fn normalize(pattern: &str) -> Result<Vec<&str>, VfsError> {
    let mut p = pattern.trim();
    p = p.strip_prefix("./").unwrap_or(p);
    p = p.trim_start_matches('/');
    p = p.trim_end_matches('/');
    if p.is_empty() || p == "." {
        return Ok(Vec::new());
    }
    let segs: Vec<&str> = p.split('/').collect();
    if let Some(bad) = segs.iter().find(|s| s.is_empty() || **s == ".." || **s == ".") {
        return Err(VfsError::InvalidPattern {
            pattern: pattern.to_string(),
            reason: format!("segment {bad:?} is not allowed"),
        });
    }
    Ok(segs)
}

fn entries(repo: &Repository) -> Vec<&str> {
    let mut out: Vec<&str> = repo.data_paths().collect();
    if repo.spec().readme_present {
        out.push(README_PATH);
    }
    out
}

/// Every file and directory node of the repository, as full relative paths.
fn nodes<'a>(files: &[&'a str]) -> BTreeSet<&'a str> {
    let mut out = BTreeSet::new();
    for f in files {
        out.insert(*f);
        for (i, c) in f.char_indices() {
            if c == '/' {
                out.insert(&f[..i]);
            }
        }
    }
    out
}

fn segment_count(node: &str) -> usize {
    node.split('/').count()
}

/// Nodes strictly below `base` (empty for the root) and at most `depth`
/// levels down.
fn descendants<'a>(all: &BTreeSet<&'a str>, base: &str, depth: usize, out: &mut BTreeSet<&'a str>) {
    let base_len = if base.is_empty() { 0 } else { segment_count(base) };
    let prefix = if base.is_empty() { String::new() } else { format!("{base}/") };
    for n in all.range::<str, _>((Bound::Included(prefix.as_str()), Bound::Unbounded)) {
        if !n.starts_with(&prefix) {
            break;
        }
        if !n.is_empty() && segment_count(n) - base_len <= depth && *n != base {
            out.insert(n);
        }
    }
}

/// List repository entries matching `pattern`, down to `depth` levels.
///
/// A literal directory lists its contents; a literal file lists itself; a
/// pattern with wildcards lists each match plus up to `depth - 1` levels
/// below it. A literal that names nothing is treated as a prefix of its last
/// segment (`a/b` behaves like `a/b*`). Results are full paths, sorted.
pub fn vfs_list(repo: &Repository, pattern: &str, depth: usize) -> Result<Vec<String>, VfsError> {
    if depth == 0 {
        return Err(VfsError::InvalidPattern {
            pattern: pattern.to_string(),
            reason: "depth must be at least 1".into(),
        });
    }
    let segs = normalize(pattern)?;
    let files = entries(repo);
    let all = nodes(&files);
    let mut out = BTreeSet::new();
    if segs.is_empty() {
        descendants(&all, "", depth, &mut out);
        return Ok(out.into_iter().map(str::to_string).collect());
    }
    let mut segs: Vec<String> = segs.into_iter().map(str::to_string).collect();
    if !segs.iter().any(|s| has_wildcard(s)) {
        let literal = segs.join("/");
        if all.contains(literal.as_str()) {
            if files.contains(&literal.as_str()) {
                return Ok(vec![literal]);
            }
            descendants(&all, &literal, depth, &mut out);
            return Ok(out.into_iter().map(str::to_string).collect());
        }
        segs.last_mut().expect("non-empty").push('*');
    }
    let k = segs.len();
    for n in &all {
        let parts: Vec<&str> = n.split('/').collect();
        if parts.len() == k && parts.iter().zip(&segs).all(|(t, p)| glob_segment(p, t)) {
            out.insert(*n);
            descendants(&all, n, depth - 1, &mut out);
        }
    }
    Ok(out.into_iter().map(str::to_string).collect())
}

/// Apply `head` then `tail` line truncation (lines end at `\n`).
pub fn truncate_lines(bytes: &[u8], head: Option<usize>, tail: Option<usize>) -> Vec<u8> {
    let mut lines: Vec<&[u8]> = bytes.split_inclusive(|b| *b == b'\n').collect();
    if let Some(h) = head {
        lines.truncate(h);
    }
    if let Some(t) = tail {
        let skip = lines.len().saturating_sub(t);
        lines.drain(..skip);
    }
    lines.concat()
}

/// Full file bytes for `path`.
pub fn file_bytes(repo: &Repository, path: &str) -> Result<Vec<u8>, VfsError> {
    let p = path.trim_start_matches("./").trim_start_matches('/');
    if p == README_PATH {
        return render_readme(repo.spec()).ok_or_else(|| VfsError::FileNotFound(path.to_string()));
    }
    if !repo.has_path(p) {
        return Err(VfsError::FileNotFound(path.to_string()));
    }
    let table = populate_file(repo, p)?;
    Ok(encode_table(&table, repo.spec().template.extension))
}

/// File contents with optional line truncation. Truncation applies to text
/// files only; binary files are returned whole.
pub fn vfs_read(repo: &Repository, path: &str, head: Option<usize>, tail: Option<usize>) -> Result<Vec<u8>, VfsError> {
    let bytes = file_bytes(repo, path)?;
    let binary = Extension::of_path(path).is_some_and(Extension::is_binary);
    if binary {
        Ok(bytes)
    } else {
        Ok(truncate_lines(&bytes, head, tail))
    }
}

/// Write every file under `dir`, byte-identical to [`file_bytes`]. Returns
/// the number of files written.
pub fn export_repository(repo: &Repository, dir: &Path) -> Result<usize, ExportError> {
    let files = entries(repo);
    files.par_iter().try_for_each(|f| -> Result<(), ExportError> {
        let bytes = file_bytes(repo, f)?;
        let target = dir.join(f);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(target, bytes)?;
        Ok(())
    })?;
    Ok(files.len())
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Vfs(#[from] VfsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glob_basics() {
        assert!(glob_segment("*", "abc"));
        assert!(glob_segment("tau2*", "tau2_x"));
        assert!(!glob_segment("tau2*", "tau3"));
        assert!(glob_segment("a?c", "abc"));
        assert!(glob_segment("*_bfv_*", "cond=bal_bfv_ns=0.01"));
        assert!(!glob_segment("a*b", "acbd"));
        assert!(glob_segment("", ""));
    }

    #[test]
    fn truncation() {
        let b = b"a\nb\nc\n";
        assert_eq!(truncate_lines(b, Some(0), None), b"");
        assert_eq!(truncate_lines(b, Some(2), None), b"a\nb\n");
        assert_eq!(truncate_lines(b, None, Some(1)), b"c\n");
        assert_eq!(truncate_lines(b, Some(2), Some(1)), b"b\n");
        assert_eq!(truncate_lines(b, Some(3), Some(3)), b.to_vec());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("/*").unwrap(), vec!["*"]);
        assert_eq!(normalize("./a/b/").unwrap(), vec!["a", "b"]);
        assert!(normalize("/").unwrap().is_empty());
        assert!(normalize("a//b").is_err());
        assert!(normalize("a/../b").is_err());
    }
}
