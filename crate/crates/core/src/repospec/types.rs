use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::expr::{DependentExpr, VarType};
use crate::seedstream::DistributionSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedDescription {
    pub name: String,
    pub description: String,
}

/// The latent research project behind a repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectSpec {
    pub title: String,
    pub hypothesis: String,
    pub independent_vars: Vec<NamedDescription>,
    pub dependent_vars: Vec<NamedDescription>,
    pub confounders: Vec<NamedDescription>,
    pub setup_text: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceholderKind {
    Independent,
    Date,
    Sequence,
    Researcher,
}

/// A directory/file-name placeholder. Rendered as `label + value`, where
/// `label` is a literal prefix such as `"cond="`, `"gphase_"` or `""`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderVariable {
    pub name: String,
    pub kind: PlaceholderKind,
    pub label: String,
    pub description: String,
    pub values: Vec<String>,
}

impl PlaceholderVariable {
    /// Text of `value` inside a path: dates become `DD_MM_YYYY`.
    pub fn render_value(&self, value: &str) -> String {
        match self.kind {
            PlaceholderKind::Date => iso_to_path_date(value).unwrap_or_else(|| value.to_string()),
            _ => value.to_string(),
        }
    }

    pub fn render(&self, value: &str) -> String {
        format!("{}{}", self.label, self.render_value(value))
    }
}

/// `2025-05-01` -> `01_05_2025`.
pub fn iso_to_path_date(iso: &str) -> Option<String> {
    let date = chrono::NaiveDate::parse_from_str(iso, "%Y-%m-%d").ok()?;
    Some(date.format("%d_%m_%Y").to_string())
}

/// `01_05_2025` -> `2025-05-01`.
pub fn path_date_to_iso(text: &str) -> Option<String> {
    let date = chrono::NaiveDate::parse_from_str(text, "%d_%m_%Y").ok()?;
    Some(date.format("%Y-%m-%d").to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connector {
    #[serde(rename = "/")]
    Slash,
    #[serde(rename = "_")]
    Underscore,
    #[serde(rename = "-")]
    Dash,
}

impl Connector {
    pub fn as_char(self) -> char {
        match self {
            Connector::Slash => '/',
            Connector::Underscore => '_',
            Connector::Dash => '-',
        }
    }

    pub fn from_text(s: &str) -> Option<Self> {
        match s {
            "/" => Some(Connector::Slash),
            "_" => Some(Connector::Underscore),
            "-" => Some(Connector::Dash),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateToken {
    Placeholder(String),
    Connector(Connector),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extension {
    Csv,
    Json,
    Jsonl,
    Xlsx,
    Txt,
    Log,
}

impl Extension {
    pub const ALL: [Extension; 6] = [
        Extension::Csv,
        Extension::Json,
        Extension::Jsonl,
        Extension::Xlsx,
        Extension::Txt,
        Extension::Log,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Extension::Csv => "csv",
            Extension::Json => "json",
            Extension::Jsonl => "jsonl",
            Extension::Xlsx => "xlsx",
            Extension::Txt => "txt",
            Extension::Log => "log",
        }
    }

    pub fn mime_type(self) -> &'static str {
        match self {
            Extension::Csv => "text/csv",
            Extension::Json => "application/json",
            Extension::Jsonl => "application/x-ndjson",
            Extension::Xlsx => "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
            Extension::Txt | Extension::Log => "text/plain",
        }
    }

    pub fn is_binary(self) -> bool {
        self == Extension::Xlsx
    }

    pub fn of_path(path: &str) -> Option<Self> {
        let (_, ext) = path.rsplit_once('.')?;
        ext.parse().ok()
    }
}

impl FromStr for Extension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Extension::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown extension {s:?}"))
    }
}

impl fmt::Display for Extension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Alternating placeholder/connector tokens plus the file extension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathTemplate {
    pub tokens: Vec<TemplateToken>,
    pub extension: Extension,
}

impl PathTemplate {
    pub fn placeholder_names(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().filter_map(|t| match t {
            TemplateToken::Placeholder(n) => Some(n.as_str()),
            TemplateToken::Connector(_) => None,
        })
    }

    /// Human-readable form, e.g. `./{gphase}/{gtype}_{date}/{tpt}/{seq_number}-{pH}.jsonl`.
    pub fn pattern(&self) -> String {
        let mut out = String::from("./");
        for t in &self.tokens {
            match t {
                TemplateToken::Placeholder(n) => {
                    out.push('{');
                    out.push_str(n);
                    out.push('}');
                }
                TemplateToken::Connector(c) => out.push(c.as_char()),
            }
        }
        out.push('.');
        out.push_str(self.extension.as_str());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableRole {
    Identifier,
    Datetime,
    Independent,
    Dependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Categorical,
    DiscreteInteger,
    Continuous,
}

impl VariableKind {
    pub fn is_numeric(self) -> bool {
        self != VariableKind::Categorical
    }

    pub fn var_type(self) -> VarType {
        if self.is_numeric() {
            VarType::Num
        } else {
            VarType::Str
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VariableKind::Categorical => "categorical",
            VariableKind::DiscreteInteger => "discrete_integer",
            VariableKind::Continuous => "continuous",
        }
    }
}

/// How a column's values are produced. Identifier and datetime columns use
/// fixed rules; independents sample a distribution; dependents evaluate an
/// expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum VariableGenerator {
    Identifier,
    Datetime,
    Distribution { dist: DistributionSpec },
    Expression { expr: DependentExpr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileVariable {
    pub name: String,
    pub role: VariableRole,
    pub kind: VariableKind,
    pub description: String,
    pub generator: VariableGenerator,
}

impl FileVariable {
    pub fn dist(&self) -> Option<&DistributionSpec> {
        match &self.generator {
            VariableGenerator::Distribution { dist } => Some(dist),
            _ => None,
        }
    }

    pub fn expr(&self) -> Option<&DependentExpr> {
        match &self.generator {
            VariableGenerator::Expression { expr } => Some(expr),
            _ => None,
        }
    }

    /// Role, kind and generator agree with each other.
    pub fn check_consistency(&self) -> Result<(), String> {
        let ok = match (&self.role, &self.generator) {
            (VariableRole::Identifier, VariableGenerator::Identifier) => self.kind == VariableKind::Categorical,
            (VariableRole::Datetime, VariableGenerator::Datetime) => self.kind == VariableKind::Categorical,
            (VariableRole::Independent, VariableGenerator::Distribution { dist }) => match self.kind {
                VariableKind::Categorical => dist.is_categorical(),
                VariableKind::DiscreteInteger => dist.is_discrete(),
                VariableKind::Continuous => dist.is_continuous(),
            },
            (VariableRole::Dependent, VariableGenerator::Expression { .. }) => self.kind.is_numeric(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(format!(
                "variable {:?}: role {:?} / kind {:?} / generator do not agree",
                self.name, self.role, self.kind
            ))
        }
    }
}
