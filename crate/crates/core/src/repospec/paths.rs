//! Template rendering, cross-product expansion and path parsing.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::{PathTemplate, PlaceholderVariable, TemplateToken};
use crate::seedstream::{sample_path_count, PathSamplerParams, RandomStream};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("unknown placeholder {0:?}")]
    UnknownPlaceholder(String),
    #[error("placeholder {name:?} has no value {value:?}")]
    UnknownValue { name: String, value: String },
    #[error("placeholder {0:?} has no assigned value")]
    MissingAssignment(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
}

/// One kept path and the index of each placeholder's value (template order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedPath {
    pub path: String,
    pub assignment: Vec<usize>,
}

/// Check the alternation invariant and that placeholders match `placeholders`
/// one-to-one, in order.
pub fn validate_template(template: &PathTemplate, placeholders: &[PlaceholderVariable]) -> Result<(), PathError> {
    let bad = |m: &str| Err(PathError::InvalidTemplate(m.to_string()));
    if template.tokens.is_empty() {
        return bad("template has no tokens");
    }
    for (i, token) in template.tokens.iter().enumerate() {
        let expect_placeholder = i % 2 == 0;
        match (token, expect_placeholder) {
            (TemplateToken::Placeholder(_), true) | (TemplateToken::Connector(_), false) => {}
            (TemplateToken::Placeholder(_), false) => return bad("adjacent placeholders need a connector"),
            (TemplateToken::Connector(_), true) => return bad("connectors must sit between placeholders"),
        }
    }
    if template.tokens.len().is_multiple_of(2) {
        return bad("template must end with a placeholder");
    }
    let names: Vec<&str> = template.placeholder_names().collect();
    let mut seen = HashSet::new();
    if names.iter().any(|n| !seen.insert(*n)) {
        return bad("a placeholder appears twice");
    }
    if names.len() != placeholders.len() || names.iter().zip(placeholders).any(|(n, p)| *n != p.name) {
        return bad("template placeholders do not match the placeholder list");
    }
    if let Some(p) = placeholders.iter().find(|p| p.values.is_empty()) {
        return Err(PathError::InvalidTemplate(format!("placeholder {:?} has no values", p.name)));
    }
    Ok(())
}

/// Render from value indices, one per placeholder in template order.
pub fn render_indices(template: &PathTemplate, placeholders: &[PlaceholderVariable], assignment: &[usize]) -> String {
    let mut out = String::new();
    let mut k = 0;
    for token in &template.tokens {
        match token {
            TemplateToken::Placeholder(_) => {
                let p = &placeholders[k];
                out.push_str(&p.render(&p.values[assignment[k]]));
                k += 1;
            }
            TemplateToken::Connector(c) => out.push(c.as_char()),
        }
    }
    out.push('.');
    out.push_str(template.extension.as_str());
    out
}

/// Render from a name -> canonical value map.
pub fn render_path(
    template: &PathTemplate,
    placeholders: &[PlaceholderVariable],
    assignment: &HashMap<String, String>,
) -> Result<String, PathError> {
    if let Some(extra) = assignment.keys().find(|k| !placeholders.iter().any(|p| &p.name == *k)) {
        return Err(PathError::UnknownPlaceholder(extra.clone()));
    }
    let mut idx = Vec::with_capacity(placeholders.len());
    for name in template.placeholder_names() {
        let p = placeholders
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| PathError::UnknownPlaceholder(name.to_string()))?;
        let value = assignment
            .get(name)
            .ok_or_else(|| PathError::MissingAssignment(name.to_string()))?;
        let i = p.values.iter().position(|v| v == value).ok_or_else(|| PathError::UnknownValue {
            name: name.to_string(),
            value: value.clone(),
        })?;
        idx.push(i);
    }
    Ok(render_indices(template, placeholders, &idx))
}

/// Recover value indices from a rendered path. When several assignments
/// render identically, the first in canonical order wins.
pub fn parse_path(template: &PathTemplate, placeholders: &[PlaceholderVariable], path: &str) -> Option<Vec<usize>> {
    let suffix = format!(".{}", template.extension.as_str());
    let body = path.strip_suffix(&suffix)?;
    let mut out = Vec::with_capacity(placeholders.len());
    if parse_from(template, placeholders, body, 0, 0, &mut out) {
        Some(out)
    } else {
        None
    }
}

fn parse_from(
    template: &PathTemplate,
    placeholders: &[PlaceholderVariable],
    rest: &str,
    token: usize,
    k: usize,
    out: &mut Vec<usize>,
) -> bool {
    if token >= template.tokens.len() {
        return rest.is_empty();
    }
    match &template.tokens[token] {
        TemplateToken::Connector(c) => match rest.strip_prefix(c.as_char()) {
            Some(r) => parse_from(template, placeholders, r, token + 1, k, out),
            None => false,
        },
        TemplateToken::Placeholder(_) => {
            let p = &placeholders[k];
            for (i, v) in p.values.iter().enumerate() {
                if let Some(r) = rest.strip_prefix(p.render(v).as_str()) {
                    out.push(i);
                    if parse_from(template, placeholders, r, token + 1, k + 1, out) {
                        return true;
                    }
                    out.pop();
                }
            }
            false
        }
    }
}

/// Full cross product in canonical order (last placeholder fastest), with
/// later duplicates of an already rendered path dropped.
pub fn cross_product(template: &PathTemplate, placeholders: &[PlaceholderVariable]) -> Vec<ExpandedPath> {
    let sizes: Vec<usize> = placeholders.iter().map(|p| p.values.len()).collect();
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut seen = HashSet::with_capacity(total);
    let mut idx = vec![0usize; sizes.len()];
    for _ in 0..total {
        let path = render_indices(template, placeholders, &idx);
        if seen.insert(path.clone()) {
            out.push(ExpandedPath {
                path,
                assignment: idx.clone(),
            });
        }
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < sizes[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// Draw how many paths to keep, keep a shuffled prefix of that size, and sort
/// lexicographically.
pub fn expand_paths(
    template: &PathTemplate,
    placeholders: &[PlaceholderVariable],
    params: &PathSamplerParams,
    stream: &mut RandomStream,
) -> Vec<ExpandedPath> {
    let mut all = cross_product(template, placeholders);
    let n = sample_path_count(all.len() as u64, params, stream) as usize;
    if n < all.len() {
        stream.shuffle(&mut all);
        all.truncate(n);
    }
    all.sort_by(|a, b| a.path.cmp(&b.path));
    all
}
