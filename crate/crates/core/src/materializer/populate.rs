use chrono::{Duration, NaiveDate};
use thiserror::Error;

use super::MaterializerParams;
use crate::repospec::expr::{Binding, CompiledExpr};
use crate::repospec::{FileVariable, Repository, VariableGenerator, VariableKind};
use crate::seedstream::RandomStream;
use crate::value::{round_sig, Value};

/// Significant figures kept for continuous cells.
pub const CONTINUOUS_SIG_FIGS: u32 = 6;
const IDENTIFIER_OFFSETS: usize = 1_000_000;
const DATETIME_WINDOW_DAYS: usize = 180;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaterializeError {
    #[error("path not in repository: {0}")]
    PathNotInRepository(String),
    #[error("evaluating {variable:?} at row {row}: {message}")]
    ExprEval { variable: String, row: usize, message: String },
    #[error("malformed spec: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub variable: FileVariable,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableData {
    pub columns: Vec<Column>,
    pub n_rows: usize,
}

impl TableData {
    pub fn header(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.variable.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.variable.name == name)
    }

    /// Every cell rendered to its canonical text, row-major.
    pub fn rendered_rows(&self) -> Vec<Vec<String>> {
        (0..self.n_rows)
            .map(|r| self.columns.iter().map(|c| c.values[r].render()).collect())
            .collect()
    }
}

/// Populate `path`. Every draw comes from the stream seeded by the path hash,
/// so files are independent of each other and of materialization order.
pub fn populate_file(repo: &Repository, path: &str) -> Result<TableData, MaterializeError> {
    populate_traced(repo, path).map(|(t, _)| t)
}

/// As [`populate_file`], also returning the noise drawn for each dependent
/// column (outer index follows dependent columns in order).
pub fn populate_traced(repo: &Repository, path: &str) -> Result<(TableData, Vec<Vec<f64>>), MaterializeError> {
    let spec = repo.spec();
    let path_idx = repo
        .path_index(path)
        .ok_or_else(|| MaterializeError::PathNotInRepository(path.to_string()))?;
    let params = spec.materializer;
    let mut stream = RandomStream::for_path(path);

    let n_rows = draw_row_count(&params, &mut stream);

    let anchor = NaiveDate::parse_from_str(&spec.datetime_anchor, "%Y-%m-%d")
        .map_err(|e| MaterializeError::Malformed(format!("datetime anchor: {e}")))?;

    let mut columns: Vec<Column> = Vec::with_capacity(spec.variables.len());
    let mut noise_trace = Vec::new();
    for (ci, var) in spec.variables.iter().enumerate() {
        let values = match &var.generator {
            VariableGenerator::Identifier => {
                let offset = stream.index(IDENTIFIER_OFFSETS);
                (0..n_rows).map(|r| Value::Str(format!("ID-{:07}", offset + r))).collect()
            }
            VariableGenerator::Datetime => (0..n_rows)
                .map(|_| {
                    let back = stream.index(DATETIME_WINDOW_DAYS) as i64;
                    Value::Str((anchor - Duration::days(back)).format("%Y-%m-%d").to_string())
                })
                .collect(),
            VariableGenerator::Distribution { dist } => {
                dist.validate()
                    .map_err(|e| MaterializeError::Malformed(format!("{}: {e}", var.name)))?;
                (0..n_rows)
                    .map(|_| match dist.sample_unchecked(&mut stream) {
                        Value::Real(x) => Value::Real(round_sig(x, CONTINUOUS_SIG_FIGS)),
                        v => v,
                    })
                    .collect()
            }
            VariableGenerator::Expression { expr } => {
                let slots: Vec<&str> = spec
                    .placeholders
                    .iter()
                    .map(|p| p.name.as_str())
                    .chain(spec.variables[..ci].iter().map(|v| v.name.as_str()))
                    .collect();
                let compiled = CompiledExpr::compile(expr.ast(), &slots).map_err(|e| MaterializeError::ExprEval {
                    variable: var.name.clone(),
                    row: 0,
                    message: e.0,
                })?;
                let mut env: Vec<Binding<'_>> = (0..spec.placeholders.len())
                    .map(|k| Binding::Str(repo.path_value(path_idx, k)))
                    .collect();
                let mut out = Vec::with_capacity(n_rows);
                let mut noise = Vec::with_capacity(n_rows);
                for r in 0..n_rows {
                    env.truncate(spec.placeholders.len());
                    env.extend(columns.iter().map(|c| match &c.values[r] {
                        Value::Str(s) => Binding::Str(s),
                        v => Binding::Num(v.as_f64().expect("numeric cell")),
                    }));
                    let e = stream.standard_normal() * params.sigma_noise;
                    noise.push(e);
                    let y = compiled.eval(&env, e).map_err(|err| MaterializeError::ExprEval {
                        variable: var.name.clone(),
                        row: r,
                        message: err.0,
                    })?;
                    out.push(cell_for(var.kind, y).ok_or_else(|| MaterializeError::ExprEval {
                        variable: var.name.clone(),
                        row: r,
                        message: format!("{y} does not fit an integer column"),
                    })?);
                }
                noise_trace.push(noise);
                out
            }
        };
        columns.push(Column {
            variable: var.clone(),
            values,
        });
    }
    Ok((TableData { columns, n_rows }, noise_trace))
}

/// `max(1, round_half_even(mu + sigma * z))`; the first draw of every file.
pub fn draw_row_count(params: &MaterializerParams, stream: &mut RandomStream) -> usize {
    let draw = params.mu_rows + params.sigma_rows * stream.standard_normal();
    draw.round_ties_even().max(1.0) as usize
}

/// Stored cell for a dependent output: integers round half to even, reals
/// keep six significant figures.
pub fn cell_for(kind: VariableKind, y: f64) -> Option<Value> {
    match kind {
        VariableKind::DiscreteInteger => {
            let r = y.round_ties_even();
            (r.abs() < 9.0e15).then_some(Value::Int(r as i64))
        }
        _ => Some(Value::Real(round_sig(y, CONTINUOUS_SIG_FIGS))),
    }
}
