//! Three-level scientific taxonomy (field → domain → subdomain).
//!
//! File format (UTF-8 JSON):
//!
//! ```json
//! {
//!   "schema": "reposim-taxonomy/v1",
//!   "counts": {"fields": 11, "domains": 33, "subdomains": 99},
//!   "fields": [
//!     {"name": "Computer Science",
//!      "domains": [{"name": "...", "subdomains": ["...", "..."]}]}
//!   ]
//! }
//! ```
//!
//! The `counts` header must match the tree exactly.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seedstream::RandomStream;

pub const TAXONOMY_SCHEMA: &str = "reposim-taxonomy/v1";

const BUNDLED: &str = include_str!("../data/taxonomy.json");

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("cannot read taxonomy {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("taxonomy is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("taxonomy schema error at {node}: {problem}")]
    Schema { node: String, problem: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub fields: usize,
    pub domains: usize,
    pub subdomains: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub subdomains: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub domains: Vec<Domain>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub fields: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScientificContext {
    pub field: String,
    pub domain: String,
    pub subdomain: String,
}

#[derive(Deserialize)]
struct TaxonomyDocument {
    schema: String,
    counts: Counts,
    fields: Vec<Field>,
}

impl Taxonomy {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled taxonomy is valid")
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let doc: TaxonomyDocument = serde_json::from_str(text)?;
        let schema_err = |node: &str, problem: String| TaxonomyError::Schema {
            node: node.to_string(),
            problem,
        };
        if doc.schema != TAXONOMY_SCHEMA {
            return Err(schema_err("schema", format!("expected {TAXONOMY_SCHEMA:?}, got {:?}", doc.schema)));
        }
        if doc.fields.is_empty() {
            return Err(schema_err("fields", "no fields".into()));
        }
        let mut field_names = HashSet::new();
        for field in &doc.fields {
            let node = format!("field {:?}", field.name);
            if field.name.trim().is_empty() {
                return Err(schema_err(&node, "empty name".into()));
            }
            if !field_names.insert(&field.name) {
                return Err(schema_err(&node, "duplicate field name".into()));
            }
            if field.domains.is_empty() {
                return Err(schema_err(&node, "field has no domains".into()));
            }
            let mut domain_names = HashSet::new();
            for domain in &field.domains {
                let node = format!("{node} / domain {:?}", domain.name);
                if domain.name.trim().is_empty() {
                    return Err(schema_err(&node, "empty name".into()));
                }
                if !domain_names.insert(&domain.name) {
                    return Err(schema_err(&node, "duplicate domain name".into()));
                }
                if domain.subdomains.is_empty() {
                    return Err(schema_err(&node, "domain has no subdomains".into()));
                }
                let mut sub_names = HashSet::new();
                for sub in &domain.subdomains {
                    if sub.trim().is_empty() || !sub_names.insert(sub) {
                        return Err(schema_err(
                            &format!("{node} / subdomain {sub:?}"),
                            "empty or duplicate subdomain".into(),
                        ));
                    }
                }
            }
        }
        let taxonomy = Taxonomy { fields: doc.fields };
        let actual = taxonomy.counts();
        if actual != doc.counts {
            return Err(schema_err(
                "counts",
                format!("header declares {:?} but tree has {:?}", doc.counts, actual),
            ));
        }
        Ok(taxonomy)
    }

    pub fn counts(&self) -> Counts {
        Counts {
            fields: self.fields.len(),
            domains: self.fields.iter().map(|f| f.domains.len()).sum(),
            subdomains: self
                .fields
                .iter()
                .flat_map(|f| &f.domains)
                .map(|d| d.subdomains.len())
                .sum(),
        }
    }

    /// Per-field (domains, subdomains) counts.
    pub fn field_counts(&self) -> Vec<(String, usize, usize)> {
        self.fields
            .iter()
            .map(|f| {
                let subs = f.domains.iter().map(|d| d.subdomains.len()).sum();
                (f.name.clone(), f.domains.len(), subs)
            })
            .collect()
    }

    pub fn contains(&self, ctx: &ScientificContext) -> bool {
        self.fields
            .iter()
            .filter(|f| f.name == ctx.field)
            .flat_map(|f| &f.domains)
            .filter(|d| d.name == ctx.domain)
            .any(|d| d.subdomains.contains(&ctx.subdomain))
    }

    /// Uniform at each level; consumes exactly three uniforms.
    pub fn sample_context(&self, stream: &mut RandomStream) -> ScientificContext {
        let field = stream.choose(&self.fields);
        let domain = stream.choose(&field.domains);
        let subdomain = stream.choose(&domain.subdomains);
        ScientificContext {
            field: field.name.clone(),
            domain: domain.name.clone(),
            subdomain: subdomain.clone(),
        }
    }
}
