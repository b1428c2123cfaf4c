use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::value::Value;

pub const QA_SCHEMA: &str = "reposim-qa/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    RepositoryMetadata,
    FileMetadata,
    DirectoryTraversal,
    UnivariateStatistics,
    BivariateStatistics,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::RepositoryMetadata => "repository-metadata",
            Category::FileMetadata => "file-metadata",
            Category::DirectoryTraversal => "directory-traversal",
            Category::UnivariateStatistics => "univariate-statistics",
            Category::BivariateStatistics => "bivariate-statistics",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QType {
    Readme,
    Title,
    Abstract,
    Extension,
    CountRows,
    DirectoryPrefix,
    DirectoryCondition,
    UnivariateSingleFile,
    UnivariateCondition,
    BivariateStatistic,
    BivariateHypothesis,
}

impl QType {
    pub const ALL: [QType; 11] = [
        QType::Readme,
        QType::Title,
        QType::Abstract,
        QType::Extension,
        QType::CountRows,
        QType::DirectoryPrefix,
        QType::DirectoryCondition,
        QType::UnivariateSingleFile,
        QType::UnivariateCondition,
        QType::BivariateStatistic,
        QType::BivariateHypothesis,
    ];

    pub fn category(self) -> Category {
        match self {
            QType::Readme | QType::Title | QType::Abstract => Category::RepositoryMetadata,
            QType::Extension | QType::CountRows => Category::FileMetadata,
            QType::DirectoryPrefix | QType::DirectoryCondition => Category::DirectoryTraversal,
            QType::UnivariateSingleFile | QType::UnivariateCondition => Category::UnivariateStatistics,
            QType::BivariateStatistic | QType::BivariateHypothesis => Category::BivariateStatistics,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QType::Readme => "readme",
            QType::Title => "title",
            QType::Abstract => "abstract",
            QType::Extension => "extension",
            QType::CountRows => "count-rows",
            QType::DirectoryPrefix => "directory-prefix",
            QType::DirectoryCondition => "directory-condition",
            QType::UnivariateSingleFile => "univariate-single-file",
            QType::UnivariateCondition => "univariate-condition",
            QType::BivariateStatistic => "bivariate-statistic",
            QType::BivariateHypothesis => "bivariate-hypothesis",
        }
    }

    /// Asked once per repository rather than `per_repo` times.
    pub fn once_per_repo(self) -> bool {
        matches!(self, QType::Readme | QType::Title | QType::Abstract | QType::Extension)
    }
}

impl fmt::Display for QType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        QType::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| format!("unknown question type {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "value", rename_all = "snake_case")]
pub enum PathPredicate {
    Equals(String),
    OneOf(Vec<String>),
}

impl PathPredicate {
    pub fn matches(&self, value: &str) -> bool {
        match self {
            PathPredicate::Equals(v) => v == value,
            PathPredicate::OneOf(vs) => vs.iter().any(|v| v == value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCondition {
    pub placeholder: String,
    pub predicate: PathPredicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "value", rename_all = "snake_case")]
pub enum RowPredicate {
    Equals(String),
    OneOf(Vec<String>),
    LessThan(f64),
    GreaterThan(f64),
    AtLeast(f64),
    AtMost(f64),
    InRange([f64; 2]),
}

impl RowPredicate {
    pub fn is_numeric(&self) -> bool {
        !matches!(self, RowPredicate::Equals(_) | RowPredicate::OneOf(_))
    }

    pub fn matches(&self, v: &Value) -> bool {
        match (self, v.as_f64()) {
            (RowPredicate::Equals(s), _) => v.render() == *s,
            (RowPredicate::OneOf(ss), _) => {
                ss.contains(&v.render())
            }
            (_, None) => false,
            (RowPredicate::LessThan(t), Some(x)) => x < *t,
            (RowPredicate::GreaterThan(t), Some(x)) => x > *t,
            (RowPredicate::AtLeast(t), Some(x)) => x >= *t,
            (RowPredicate::AtMost(t), Some(x)) => x <= *t,
            (RowPredicate::InRange([lo, hi]), Some(x)) => *lo <= x && x <= *hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCondition {
    pub variable: String,
    pub predicate: RowPredicate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryFilters {
    #[serde(default)]
    pub path_conditions: Vec<PathCondition>,
    #[serde(default)]
    pub row_conditions: Vec<RowCondition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Mean,
    Median,
    Variance,
    Mode,
}

impl Stat {
    pub fn as_str(self) -> &'static str {
        match self {
            Stat::Mean => "mean",
            Stat::Median => "median",
            Stat::Variance => "variance",
            Stat::Mode => "mode",
        }
    }
}

/// What an item asks for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    ReadmePresent,
    Title,
    Abstract,
    Extension,
    /// Data rows in one file.
    RowCount { path: String },
    /// Data files matching an optional literal prefix and the path conditions.
    FileCount {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prefix: Option<String>,
    },
    /// A statistic of one variable, in a single file or pooled across the
    /// files matching the path conditions.
    Univariate {
        stat: Stat,
        variable: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
    },
    Pearson { x: String, y: String },
    ChiSquare { a: String, b: String, p_threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerKind {
    CategoricalFinite { options: Vec<String> },
    OpenString,
    Integer,
    Continuous,
    /// yes / no / not possible.
    ThreeClass,
}

impl AnswerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnswerKind::CategoricalFinite { .. } => "categorical_finite",
            AnswerKind::OpenString => "open_string",
            AnswerKind::Integer => "integer",
            AnswerKind::Continuous => "continuous",
            AnswerKind::ThreeClass => "three_class",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NotPossibleReason {
    EmptyFileSet,
    EmptyRowSet,
    InvalidOperation,
    ReadmeAbsent,
}

impl NotPossibleReason {
    pub fn as_str(self) -> &'static str {
        match self {
            NotPossibleReason::EmptyFileSet => "empty-file-set",
            NotPossibleReason::EmptyRowSet => "empty-row-set",
            NotPossibleReason::InvalidOperation => "invalid-operation",
            NotPossibleReason::ReadmeAbsent => "readme-absent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GroundTruth {
    Answer {
        value: Value,
    },
    NotPossible {
        reason: NotPossibleReason,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
}

impl GroundTruth {
    pub fn is_answerable(&self) -> bool {
        matches!(self, GroundTruth::Answer { .. })
    }

    pub fn value(&self) -> Option<&Value> {
        match self {
            GroundTruth::Answer { value } => Some(value),
            _ => None,
        }
    }

    pub fn reason(&self) -> Option<NotPossibleReason> {
        match self {
            GroundTruth::NotPossible { reason, .. } => Some(*reason),
            _ => None,
        }
    }

    pub(crate) fn not_possible(reason: NotPossibleReason) -> Self {
        GroundTruth::NotPossible { reason, detail: None }
    }

    pub(crate) fn degenerate(detail: impl Into<String>) -> Self {
        GroundTruth::NotPossible {
            reason: NotPossibleReason::EmptyRowSet,
            detail: Some(detail.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRowCount {
    pub path: String,
    pub rows: usize,
    pub surviving: usize,
}

/// Machine-checkable evidence that an item has no answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Certificate {
    /// The file predicate evaluated false on every data path.
    EmptyFileSet { paths_checked: usize, matches: usize },
    /// Rows surviving the row conditions in each matched file, against the
    /// statistic's minimum; `degenerate` names a zero-variance or
    /// single-level failure when enough rows survive.
    EmptyRowSet {
        files: Vec<FileRowCount>,
        surviving: usize,
        minimum: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degenerate: Option<String>,
    },
    InvalidOperation {
        variable: String,
        kind: String,
        operation: String,
    },
    ReadmeAbsent { readme_present: bool },
}

impl Certificate {
    pub fn reason(&self) -> NotPossibleReason {
        match self {
            Certificate::EmptyFileSet { .. } => NotPossibleReason::EmptyFileSet,
            Certificate::EmptyRowSet { .. } => NotPossibleReason::EmptyRowSet,
            Certificate::InvalidOperation { .. } => NotPossibleReason::InvalidOperation,
            Certificate::ReadmeAbsent { .. } => NotPossibleReason::ReadmeAbsent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paraphrase {
    pub model_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub schema: String,
    pub id: String,
    pub repo_seed: u64,
    pub category: Category,
    pub qtype: QType,
    /// Answer-format instruction shown before the question.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub preamble: String,
    pub template_text: String,
    #[serde(default)]
    pub paraphrases: Vec<Paraphrase>,
    pub target: Target,
    #[serde(default)]
    pub filters: QueryFilters,
    pub answer_kind: AnswerKind,
    pub sig_figs: u32,
    pub ground_truth: GroundTruth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
}

impl QAItem {
    /// The question text for a variant: 0 is the template, `i > 0` the
    /// `i`-th paraphrase.
    pub fn variant_text(&self, variant: usize) -> Option<&str> {
        if variant == 0 {
            Some(&self.template_text)
        } else {
            self.paraphrases.get(variant - 1).map(|p| p.text.as_str())
        }
    }

    /// Preamble and question as shown to an agent.
    pub fn prompt(&self, variant: usize) -> Option<String> {
        let text = self.variant_text(variant)?;
        Some(if self.preamble.is_empty() {
            text.to_string()
        } else {
            format!("{} {text}", self.preamble)
        })
    }
}
