//! Stage contracts: the payload each stage conditions on and the response
//! shape it must return, plus the validator applied to every response.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{GenerationRequest, Stage};
use crate::repospec::expr::{parse, validate_expr, VarType, ERROR_TERM};
use crate::repospec::types::{
    Connector, NamedDescription, PlaceholderKind, PlaceholderVariable, ProjectSpec, VariableKind, VariableRole,
};
use crate::seedstream::DistributionSpec;
use crate::taxonomy::ScientificContext;

/// Token standing in for a literal file path in paraphrase requests.
pub const PATH_TOKEN: &str = "{path}";

pub const MAX_PATH_VALUES: usize = 10;
pub const MAX_FILE_VARIABLES: usize = 12;

pub fn schema_id(stage: Stage) -> &'static str {
    match stage {
        Stage::Titles => "titles/v1",
        Stage::Description => "description/v1",
        Stage::Abstract => "abstract/v1",
        Stage::PathStep => "path_step/v1",
        Stage::PathValues => "path_values/v1",
        Stage::FileVariables => "file_variables/v1",
        Stage::DistParams => "dist_params/v1",
        Stage::DependentExpr => "dependent_expr/v1",
        Stage::Paraphrase => "paraphrase/v1",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TitlesPayload {
    pub context: ScientificContext,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TitlesResponse {
    pub titles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionPayload {
    pub context: ScientificContext,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionResponse {
    pub hypothesis: String,
    pub independent_vars: Vec<NamedDescription>,
    pub dependent_vars: Vec<NamedDescription>,
    pub confounders: Vec<NamedDescription>,
    pub setup_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractPayload {
    pub context: ScientificContext,
    pub title: String,
    pub description: DescriptionResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractResponse {
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderDraft {
    pub name: String,
    pub kind: PlaceholderKind,
    pub label: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStepPayload {
    pub project: ProjectSpec,
    pub n_path: usize,
    /// Placeholders chosen so far, in template order.
    pub chosen: Vec<PlaceholderDraft>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStepResponse {
    pub placeholder: PlaceholderDraft,
    /// Connector placed before this placeholder; absent for the first one.
    pub connector: Option<Connector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathValuesPayload {
    pub project: ProjectSpec,
    pub placeholder: PlaceholderDraft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathValuesResponse {
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileVariablesPayload {
    pub project: ProjectSpec,
    pub path_variables: Vec<PlaceholderVariable>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileVariableDraft {
    pub name: String,
    pub role: VariableRole,
    pub kind: VariableKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileVariablesResponse {
    pub variables: Vec<FileVariableDraft>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistParamsPayload {
    pub project: ProjectSpec,
    pub variable: FileVariableDraft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistParamsResponse {
    pub dist: DistributionSpec,
}

/// A name a dependent expression may reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExprInput {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: VarType,
    pub description: String,
    /// Possible values of string inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    /// Analytic mean of numeric inputs, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependentExprPayload {
    pub project: ProjectSpec,
    pub variable: FileVariableDraft,
    pub inputs: Vec<ExprInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependentExprResponse {
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphrasePayload {
    pub project: ProjectSpec,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseResponse {
    pub paraphrase: String,
}

/// Variable names: an ASCII letter or `_`, then letters, digits or `_`.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(name, "if" | "then" | "else" | "and" | "or" | "not" | "lookup")
}

/// Characters allowed in path labels and values.
pub fn is_path_safe(text: &str) -> bool {
    text.chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-' | '=' | '+'))
}

fn non_empty(what: &str, text: &str) -> Result<(), String> {
    if text.trim().is_empty() {
        Err(format!("{what} is empty"))
    } else {
        Ok(())
    }
}

fn parse_response<T: for<'de> Deserialize<'de>>(stage: Stage, response: &Json) -> Result<T, String> {
    serde_json::from_value(response.clone()).map_err(|e| format!("{stage} response has the wrong shape: {e}"))
}

/// Check `response` against the contract of `request.stage`.
pub fn validate(request: &GenerationRequest, response: &Json) -> Result<(), String> {
    match request.stage {
        Stage::Titles => {
            let p: TitlesPayload = request.payload()?;
            let r: TitlesResponse = parse_response(request.stage, response)?;
            if r.titles.len() != p.k {
                return Err(format!("expected {} titles, got {}", p.k, r.titles.len()));
            }
            let mut seen = HashSet::new();
            for t in &r.titles {
                non_empty("title", t)?;
                if t.contains('\n') || t.len() > 200 {
                    return Err(format!("title {t:?} must be a single line under 200 bytes"));
                }
                if !seen.insert(t.trim()) {
                    return Err(format!("duplicate title {t:?}"));
                }
            }
            Ok(())
        }
        Stage::Description => {
            let r: DescriptionResponse = parse_response(request.stage, response)?;
            non_empty("hypothesis", &r.hypothesis)?;
            non_empty("setup_text", &r.setup_text)?;
            for (what, list) in [
                ("independent_vars", &r.independent_vars),
                ("dependent_vars", &r.dependent_vars),
                ("confounders", &r.confounders),
            ] {
                if list.is_empty() {
                    return Err(format!("{what} is empty"));
                }
                for v in list {
                    non_empty(what, &v.name)?;
                    non_empty(what, &v.description)?;
                }
            }
            Ok(())
        }
        Stage::Abstract => {
            let r: AbstractResponse = parse_response(request.stage, response)?;
            non_empty("abstract", &r.abstract_text)?;
            if r.abstract_text.contains("\n#") {
                return Err("abstract must not contain markdown headings".into());
            }
            Ok(())
        }
        Stage::PathStep => {
            let p: PathStepPayload = request.payload()?;
            let r: PathStepResponse = parse_response(request.stage, response)?;
            let ph = &r.placeholder;
            if !is_identifier(&ph.name) || ph.name == ERROR_TERM {
                return Err(format!("placeholder name {:?} is not a valid identifier", ph.name));
            }
            if p.chosen.iter().any(|c| c.name == ph.name) {
                return Err(format!("placeholder {:?} already used", ph.name));
            }
            if ph.kind != PlaceholderKind::Independent && p.chosen.iter().any(|c| c.kind == ph.kind) {
                return Err(format!("only one {:?} placeholder is allowed", ph.kind));
            }
            if !is_path_safe(&ph.label) {
                return Err(format!("label {:?} contains characters not allowed in paths", ph.label));
            }
            non_empty("placeholder description", &ph.description)?;
            match (p.chosen.is_empty(), r.connector) {
                (true, Some(_)) => Err("the first placeholder takes no connector".into()),
                (false, None) => Err("placeholders after the first need a connector".into()),
                _ => Ok(()),
            }
        }
        Stage::PathValues => {
            let p: PathValuesPayload = request.payload()?;
            let r: PathValuesResponse = parse_response(request.stage, response)?;
            if r.values.is_empty() || r.values.len() > MAX_PATH_VALUES {
                return Err(format!("expected 1..={MAX_PATH_VALUES} values, got {}", r.values.len()));
            }
            let mut seen = HashSet::new();
            for v in &r.values {
                if v.is_empty() || !is_path_safe(v) {
                    return Err(format!("value {v:?} is empty or not path-safe"));
                }
                if !seen.insert(v) {
                    return Err(format!("duplicate value {v:?}"));
                }
                match p.placeholder.kind {
                    PlaceholderKind::Date if chrono::NaiveDate::parse_from_str(v, "%Y-%m-%d").is_err() => {
                        return Err(format!("date value {v:?} is not YYYY-MM-DD"));
                    }
                    PlaceholderKind::Sequence if v.parse::<u64>().is_err() => {
                        return Err(format!("sequence value {v:?} is not a decimal integer"));
                    }
                    _ => {}
                }
            }
            Ok(())
        }
        Stage::FileVariables => {
            let p: FileVariablesPayload = request.payload()?;
            let r: FileVariablesResponse = parse_response(request.stage, response)?;
            if r.variables.len() > MAX_FILE_VARIABLES {
                return Err(format!("at most {MAX_FILE_VARIABLES} file variables"));
            }
            let path_names: HashSet<&str> = p.path_variables.iter().map(|v| v.name.as_str()).collect();
            let mut seen = HashSet::new();
            for v in &r.variables {
                if !is_identifier(&v.name) || v.name == ERROR_TERM {
                    return Err(format!("variable name {:?} is not a valid identifier", v.name));
                }
                if path_names.contains(v.name.as_str()) {
                    return Err(format!("variable {:?} collides with a path variable", v.name));
                }
                if !seen.insert(v.name.as_str()) {
                    return Err(format!("duplicate variable {:?}", v.name));
                }
                non_empty("variable description", &v.description)?;
                let kind_ok = match v.role {
                    VariableRole::Identifier | VariableRole::Datetime => v.kind == VariableKind::Categorical,
                    VariableRole::Dependent => v.kind.is_numeric(),
                    VariableRole::Independent => true,
                };
                if !kind_ok {
                    return Err(format!("variable {:?}: kind {:?} not allowed for role {:?}", v.name, v.kind, v.role));
                }
            }
            for role in [VariableRole::Independent, VariableRole::Dependent] {
                if !r.variables.iter().any(|v| v.role == role) {
                    return Err(format!("at least one {role:?} variable is required"));
                }
            }
            Ok(())
        }
        Stage::DistParams => {
            let p: DistParamsPayload = request.payload()?;
            let r: DistParamsResponse = parse_response(request.stage, response)?;
            r.dist.validate().map_err(|e| e.to_string())?;
            let ok = match p.variable.kind {
                VariableKind::Categorical => r.dist.is_categorical(),
                VariableKind::DiscreteInteger => r.dist.is_discrete(),
                VariableKind::Continuous => r.dist.is_continuous(),
            };
            if !ok {
                return Err(format!("{} does not fit kind {:?}", r.dist.family(), p.variable.kind));
            }
            if let DistributionSpec::Categorical { values, .. } = &r.dist {
                let mut seen = HashSet::new();
                for v in values {
                    if v.contains(['\t', '\n', '\r']) || !seen.insert(v) {
                        return Err(format!("categorical value {v:?} is duplicated or contains control characters"));
                    }
                }
            }
            Ok(())
        }
        Stage::DependentExpr => {
            let p: DependentExprPayload = request.payload()?;
            let r: DependentExprResponse = parse_response(request.stage, response)?;
            let expr = parse(&r.expr).map_err(|e| e.to_string())?;
            let declared: HashMap<String, VarType> = p.inputs.iter().map(|i| (i.name.clone(), i.ty)).collect();
            validate_expr(&expr, &declared).map_err(|violations| {
                violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
            })
        }
        Stage::Paraphrase => {
            let p: ParaphrasePayload = request.payload()?;
            let r: ParaphraseResponse = parse_response(request.stage, response)?;
            non_empty("paraphrase", &r.paraphrase)?;
            let wanted = p.question.matches(PATH_TOKEN).count();
            let got = r.paraphrase.matches(PATH_TOKEN).count();
            if (wanted > 0) != (got > 0) {
                return Err(format!(
                    "paraphrase must contain {PATH_TOKEN} exactly when the question does (question {wanted}, paraphrase {got})"
                ));
            }
            Ok(())
        }
    }
}
