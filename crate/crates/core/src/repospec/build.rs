use std::collections::HashSet;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{DependentExpr, VarType, Violation};
use super::paths::{self, expand_paths};
use super::types::*;
use super::{sort_column_order, RepositorySpec, SPEC_SCHEMA};
use crate::genmodel::schema::*;
use crate::genmodel::{GenError, GenerationParams, GenerationRequest, Generator, Stage};
use crate::materializer::MaterializerParams;
use crate::seedstream::{PathSamplerParams, SeedContext};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildParams {
    /// Candidate titles per project.
    pub k: usize,
    /// Inclusive range the number of path placeholders is drawn from.
    pub n_path_min: usize,
    pub n_path_max: usize,
    pub p_readme: f64,
    pub path_sampler: PathSamplerParams,
    pub materializer: MaterializerParams,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            k: 5,
            n_path_min: 3,
            n_path_max: 6,
            p_readme: 0.85,
            path_sampler: PathSamplerParams::default(),
            materializer: MaterializerParams::default(),
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.k < 2 {
            return Err(format!("k must be at least 2, got {}", self.k));
        }
        if self.n_path_min < 1 || self.n_path_min > self.n_path_max {
            return Err(format!("bad n_path range {}..={}", self.n_path_min, self.n_path_max));
        }
        if !(0.0..=1.0).contains(&self.p_readme) {
            return Err(format!("p_readme must be a probability, got {}", self.p_readme));
        }
        let s = &self.path_sampler;
        if !(s.alpha > 0.0 && s.beta > 0.0) || s.low < 1 || s.high < s.low {
            return Err("bad path sampler parameters".into());
        }
        self.materializer.validate()
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error("dependent variable {variable:?} has an invalid expression: {}", join(.violations))]
    ExprInvalid { variable: String, violations: Vec<Violation> },
    #[error("invalid build parameters: {0}")]
    InvalidParams(String),
    #[error("inconsistent generation output: {0}")]
    Inconsistent(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

const ANCHOR_EPOCH: (i32, u32, u32) = (2021, 1, 1);
const ANCHOR_SPAN_DAYS: usize = 5 * 365;

/// Run the generation stages for `master_seed` and assemble a spec.
pub fn build_repository_spec(
    master_seed: u64,
    taxonomy: &Taxonomy,
    params: &BuildParams,
    generator: &Generator,
) -> Result<RepositorySpec, BuildError> {
    params.validate().map_err(BuildError::InvalidParams)?;
    let seed = |label: &str| SeedContext::new(master_seed, label);

    let context = taxonomy.sample_context(&mut seed("context").stream());
    let span = params.n_path_max - params.n_path_min + 1;
    let n_path = params.n_path_min + seed("n_path").stream().index(span);
    let gp = GenerationParams {
        k: params.k,
        n_path,
        model_id: generator.model_id().to_string(),
    };
    let titles: TitlesResponse = generator.generate_typed(
        &GenerationRequest::new(Stage::Titles, &TitlesPayload { context: context.clone(), k: params.k }, seed("titles")),
        &gp,
    )?;
    let title = titles.titles[seed("title_choice").stream().index(titles.titles.len())].clone();

    let description: DescriptionResponse = generator.generate_typed(
        &GenerationRequest::new(
            Stage::Description,
            &DescriptionPayload { context: context.clone(), title: title.clone() },
            seed("description"),
        ),
        &gp,
    )?;
    let abstract_resp: AbstractResponse = generator.generate_typed(
        &GenerationRequest::new(
            Stage::Abstract,
            &AbstractPayload {
                context: context.clone(),
                title: title.clone(),
                description: description.clone(),
            },
            seed("abstract"),
        ),
        &gp,
    )?;
    let project = ProjectSpec {
        title,
        hypothesis: description.hypothesis,
        independent_vars: description.independent_vars,
        dependent_vars: description.dependent_vars,
        confounders: description.confounders,
        setup_text: description.setup_text,
        abstract_text: abstract_resp.abstract_text,
    };

    let mut tokens = Vec::new();
    let mut chosen: Vec<PlaceholderDraft> = Vec::new();
    for step in 0..n_path {
        let r: PathStepResponse = generator.generate_typed(
            &GenerationRequest::new(
                Stage::PathStep,
                &PathStepPayload {
                    project: project.clone(),
                    n_path,
                    chosen: chosen.clone(),
                },
                seed(&format!("path_step/{step}")),
            ),
            &gp,
        )?;
        if let Some(c) = r.connector {
            tokens.push(TemplateToken::Connector(c));
        }
        tokens.push(TemplateToken::Placeholder(r.placeholder.name.clone()));
        chosen.push(r.placeholder);
    }

    let mut placeholders = Vec::with_capacity(n_path);
    for d in chosen {
        let r: PathValuesResponse = generator.generate_typed(
            &GenerationRequest::new(
                Stage::PathValues,
                &PathValuesPayload {
                    project: project.clone(),
                    placeholder: d.clone(),
                },
                seed(&format!("path_values/{}", d.name)),
            ),
            &gp,
        )?;
        placeholders.push(PlaceholderVariable {
            name: d.name,
            kind: d.kind,
            label: d.label,
            description: d.description,
            values: r.values,
        });
    }

    let ext_stream = &mut seed("extension").stream();
    let extension = Extension::ALL[ext_stream.index(Extension::ALL.len())];
    let template = PathTemplate { tokens, extension };
    paths::validate_template(&template, &placeholders).map_err(|e| BuildError::Inconsistent(e.to_string()))?;
    let expanded_all = paths::cross_product(&template, &placeholders).len();
    let expanded = expand_paths(&template, &placeholders, &params.path_sampler, &mut seed("paths").stream());

    let fv: FileVariablesResponse = generator.generate_typed(
        &GenerationRequest::new(
            Stage::FileVariables,
            &FileVariablesPayload {
                project: project.clone(),
                path_variables: placeholders.clone(),
            },
            seed("file_variables"),
        ),
        &gp,
    )?;
    let mut drafts = fv.variables;
    drafts.sort_by_key(|d| match d.role {
        VariableRole::Identifier => 0,
        VariableRole::Datetime => 1,
        VariableRole::Independent => 2,
        VariableRole::Dependent => 3,
    });

    let mut inputs: Vec<ExprInput> = placeholders
        .iter()
        .map(|p| ExprInput {
            name: p.name.clone(),
            ty: VarType::Str,
            description: p.description.clone(),
            values: Some(p.values.clone()),
            mean: None,
        })
        .collect();
    let mut variables: Vec<FileVariable> = Vec::with_capacity(drafts.len());
    for d in drafts {
        let generator_kind = match d.role {
            VariableRole::Identifier => VariableGenerator::Identifier,
            VariableRole::Datetime => VariableGenerator::Datetime,
            VariableRole::Independent => {
                let r: DistParamsResponse = generator.generate_typed(
                    &GenerationRequest::new(
                        Stage::DistParams,
                        &DistParamsPayload {
                            project: project.clone(),
                            variable: d.clone(),
                        },
                        seed(&format!("dist_params/{}", d.name)),
                    ),
                    &gp,
                )?;
                VariableGenerator::Distribution { dist: r.dist }
            }
            VariableRole::Dependent => {
                let r: DependentExprResponse = generator.generate_typed(
                    &GenerationRequest::new(
                        Stage::DependentExpr,
                        &DependentExprPayload {
                            project: project.clone(),
                            variable: d.clone(),
                            inputs: inputs.clone(),
                        },
                        seed(&format!("dependent_expr/{}", d.name)),
                    ),
                    &gp,
                )?;
                let expr = DependentExpr::parse(&r.expr).map_err(|e| BuildError::ExprInvalid {
                    variable: d.name.clone(),
                    violations: vec![Violation {
                        kind: super::expr::ViolationKind::Type,
                        detail: e.to_string(),
                    }],
                })?;
                let scope = inputs.iter().map(|i| (i.name.clone(), i.ty)).collect();
                expr.validate(&scope).map_err(|violations| BuildError::ExprInvalid {
                    variable: d.name.clone(),
                    violations,
                })?;
                VariableGenerator::Expression { expr }
            }
        };
        let var = FileVariable {
            name: d.name.clone(),
            role: d.role,
            kind: d.kind,
            description: d.description.clone(),
            generator: generator_kind,
        };
        var.check_consistency().map_err(BuildError::Inconsistent)?;
        let (values, mean) = match var.dist() {
            Some(crate::seedstream::DistributionSpec::Categorical { values, .. }) => (Some(values.clone()), None),
            Some(dist) => (None, dist.moments().map(|m| m.0)),
            None => (None, None),
        };
        inputs.push(ExprInput {
            name: var.name.clone(),
            ty: var.kind.var_type(),
            description: var.description.clone(),
            values,
            mean,
        });
        variables.push(var);
    }
    sort_column_order(&mut variables);
    let mut names = HashSet::new();
    for n in placeholders.iter().map(|p| &p.name).chain(variables.iter().map(|v| &v.name)) {
        if !names.insert(n) {
            return Err(BuildError::Inconsistent(format!("name {n:?} is used twice")));
        }
    }

    let readme_present = seed("readme").stream().bernoulli(params.p_readme);
    let epoch = NaiveDate::from_ymd_opt(ANCHOR_EPOCH.0, ANCHOR_EPOCH.1, ANCHOR_EPOCH.2).expect("valid epoch");
    let offset = seed("datetime_anchor").stream().index(ANCHOR_SPAN_DAYS);
    let datetime_anchor = (epoch + Duration::days(offset as i64)).format("%Y-%m-%d").to_string();

    let spec = RepositorySpec {
        schema: SPEC_SCHEMA.to_string(),
        master_seed,
        model_id: generator.model_id().to_string(),
        context,
        project,
        template,
        placeholders,
        paths: expanded,
        cross_product_size: expanded_all,
        variables,
        readme_present,
        datetime_anchor,
        materializer: params.materializer,
    };
    spec.validate().map_err(BuildError::Inconsistent)?;
    Ok(spec)
}
