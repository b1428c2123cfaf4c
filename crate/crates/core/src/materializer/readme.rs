use crate::repospec::{PlaceholderKind, RepositorySpec, VariableRole};

pub const README_PATH: &str = "README.md";

const ABSTRACT_HEADING: &str = "\n\n## Abstract\n\n";

/// README bytes, or `None` for repositories generated without one.
pub fn render_readme(spec: &RepositorySpec) -> Option<Vec<u8>> {
    if !spec.readme_present {
        return None;
    }
    let p = &spec.project;
    let mut out = format!("# {}{ABSTRACT_HEADING}{}\n\n", p.title, p.abstract_text);
    out.push_str("## Overview\n\n");
    out.push_str(&format!("Hypothesis: {}\n\n", p.hypothesis));
    out.push_str(&format!("Setup: {}\n\n", p.setup_text));
    out.push_str("## Data layout\n\n");
    out.push_str(&format!(
        "Files follow the pattern `{}`. Path fields:\n\n",
        spec.template.pattern()
    ));
    for ph in &spec.placeholders {
        let kind = match ph.kind {
            PlaceholderKind::Independent => "condition",
            PlaceholderKind::Date => "date, DD_MM_YYYY",
            PlaceholderKind::Sequence => "run number",
            PlaceholderKind::Researcher => "researcher",
        };
        out.push_str(&format!("- `{}` ({kind}): {}\n", ph.name, ph.description));
    }
    out.push_str("\nEach file holds one row per record with these columns:\n\n");
    for v in &spec.variables {
        let role = match v.role {
            VariableRole::Identifier => "identifier",
            VariableRole::Datetime => "date",
            VariableRole::Independent => "input",
            VariableRole::Dependent => "measurement",
        };
        out.push_str(&format!("- `{}` ({role}, {}): {}\n", v.name, v.kind.as_str(), v.description));
    }
    Some(out.into_bytes())
}

/// Title and abstract recovered from README text.
pub fn parse_readme(text: &str) -> Option<(String, String)> {
    let rest = text.strip_prefix("# ")?;
    let (title, rest) = rest.split_once(ABSTRACT_HEADING)?;
    let end = rest.find("\n\n## ").unwrap_or(rest.trim_end().len());
    Some((title.to_string(), rest[..end].to_string()))
}
