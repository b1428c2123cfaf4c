//! Repository specifications: the project, its path template and expanded
//! paths, and the per-file variables with their generators.

mod build;
pub mod expr;
pub mod paths;
pub mod types;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use build::{build_repository_spec, BuildError, BuildParams};
pub use paths::{parse_path, render_path, ExpandedPath, PathError};
pub use types::*;

use crate::materializer::MaterializerParams;
use crate::taxonomy::ScientificContext;
use expr::VarType;

pub const SPEC_SCHEMA: &str = "reposim-repository/v1";

/// Everything needed to re-materialize a repository byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositorySpec {
    pub schema: String,
    pub master_seed: u64,
    pub model_id: String,
    pub context: ScientificContext,
    pub project: ProjectSpec,
    pub template: PathTemplate,
    /// Path placeholders in template order.
    pub placeholders: Vec<PlaceholderVariable>,
    /// Kept paths, sorted.
    pub paths: Vec<ExpandedPath>,
    /// Size of the deduplicated cross product the paths were drawn from.
    pub cross_product_size: usize,
    /// File columns in column order.
    pub variables: Vec<FileVariable>,
    pub readme_present: bool,
    /// Latest date a datetime column can take (ISO).
    pub datetime_anchor: String,
    pub materializer: MaterializerParams,
}

fn role_rank(role: VariableRole) -> u8 {
    match role {
        VariableRole::Identifier => 0,
        VariableRole::Datetime => 1,
        VariableRole::Independent => 2,
        VariableRole::Dependent => 3,
    }
}

/// Stable sort into column order: identifiers, datetimes, independents,
/// dependents.
pub fn sort_column_order(variables: &mut [FileVariable]) {
    variables.sort_by_key(|v| role_rank(v.role));
}

impl RepositorySpec {
    pub fn placeholder(&self, name: &str) -> Option<(usize, &PlaceholderVariable)> {
        self.placeholders.iter().enumerate().find(|(_, p)| p.name == name)
    }

    pub fn variable(&self, name: &str) -> Option<(usize, &FileVariable)> {
        self.variables.iter().enumerate().find(|(_, v)| v.name == name)
    }

    /// Names an expression for column `column` may reference, with types.
    pub fn expr_scope(&self, column: usize) -> HashMap<String, VarType> {
        let mut scope: HashMap<String, VarType> =
            self.placeholders.iter().map(|p| (p.name.clone(), VarType::Str)).collect();
        for v in &self.variables[..column] {
            scope.insert(v.name.clone(), v.kind.var_type());
        }
        scope
    }

    /// Full structural check, used on specs loaded from disk.
    pub fn validate(&self) -> Result<(), String> {
        if self.schema != SPEC_SCHEMA {
            return Err(format!("unsupported spec schema {:?}", self.schema));
        }
        paths::validate_template(&self.template, &self.placeholders).map_err(|e| e.to_string())?;
        if self.paths.is_empty() {
            return Err("spec has no paths".into());
        }
        for w in self.paths.windows(2) {
            if w[0].path >= w[1].path {
                return Err(format!("paths are not sorted and unique at {:?}", w[1].path));
            }
        }
        for p in &self.paths {
            if p.assignment.len() != self.placeholders.len()
                || p.assignment.iter().zip(&self.placeholders).any(|(i, ph)| *i >= ph.values.len())
            {
                return Err(format!("path {:?} has an invalid assignment", p.path));
            }
            if paths::render_indices(&self.template, &self.placeholders, &p.assignment) != p.path {
                return Err(format!("path {:?} does not match its assignment", p.path));
            }
        }
        self.materializer.validate()?;
        chrono::NaiveDate::parse_from_str(&self.datetime_anchor, "%Y-%m-%d")
            .map_err(|e| format!("bad datetime anchor: {e}"))?;
        let mut names: HashSet<&str> = self.placeholders.iter().map(|p| p.name.as_str()).collect();
        let mut last_rank = 0;
        for (i, v) in self.variables.iter().enumerate() {
            if !names.insert(&v.name) {
                return Err(format!("duplicate name {:?}", v.name));
            }
            if role_rank(v.role) < last_rank {
                return Err("variables are not in column order".into());
            }
            last_rank = role_rank(v.role);
            v.check_consistency()?;
            if let Some(d) = v.dist() {
                d.validate().map_err(|e| format!("variable {:?}: {e}", v.name))?;
            }
            if let Some(e) = v.expr() {
                e.validate(&self.expr_scope(i)).map_err(|errs| {
                    let joined: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
                    format!("variable {:?}: {}", v.name, joined.join("; "))
                })?;
            }
        }
        if !self.variables.iter().any(|v| v.role == VariableRole::Independent)
            || !self.variables.iter().any(|v| v.role == VariableRole::Dependent)
        {
            return Err("need at least one independent and one dependent variable".into());
        }
        Ok(())
    }
}

/// A spec plus an index from rendered path to position.
#[derive(Debug, Clone)]
pub struct Repository {
    spec: RepositorySpec,
    index: HashMap<String, usize>,
}

impl Repository {
    pub fn new(spec: RepositorySpec) -> Self {
        let index = spec.paths.iter().enumerate().map(|(i, p)| (p.path.clone(), i)).collect();
        Self { spec, index }
    }

    pub fn spec(&self) -> &RepositorySpec {
        &self.spec
    }

    pub fn into_spec(self) -> RepositorySpec {
        self.spec
    }

    pub fn path_index(&self, path: &str) -> Option<usize> {
        self.index.get(path).copied()
    }

    pub fn has_path(&self, path: &str) -> bool {
        self.index.contains_key(path)
    }

    /// Canonical value of placeholder `k` in path `i`.
    pub fn path_value(&self, i: usize, k: usize) -> &str {
        let ph = &self.spec.placeholders[k];
        &ph.values[self.spec.paths[i].assignment[k]]
    }

    pub fn data_paths(&self) -> impl Iterator<Item = &str> {
        self.spec.paths.iter().map(|p| p.path.as_str())
    }
}
