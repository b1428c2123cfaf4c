//! Ground truth from privileged access to the generating program, and
//! certificates for items without an answer.

use std::sync::{Arc, OnceLock};

use super::stats;
use super::types::*;
use super::QaError;
use crate::materializer::{populate_file, TableData};
use crate::repospec::{Repository, VariableKind};
use crate::value::Value;

/// Materialized tables of one repository, each built at most once.
pub struct TableCache<'r> {
    repo: &'r Repository,
    slots: Vec<OnceLock<Result<Arc<TableData>, String>>>,
}

impl<'r> TableCache<'r> {
    pub fn new(repo: &'r Repository) -> Self {
        let slots = (0..repo.spec().paths.len()).map(|_| OnceLock::new()).collect();
        Self { repo, slots }
    }

    pub fn repo(&self) -> &'r Repository {
        self.repo
    }

    pub fn table(&self, idx: usize) -> Result<Arc<TableData>, QaError> {
        self.slots[idx]
            .get_or_init(|| {
                populate_file(self.repo, &self.repo.spec().paths[idx].path)
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(QaError::Materialize)
    }
}

/// Where a variable's values come from within a file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum VarRef {
    Column(usize, VariableKind),
    Placeholder(usize),
}

impl VarRef {
    pub(crate) fn kind(self) -> VariableKind {
        match self {
            VarRef::Column(_, k) => k,
            VarRef::Placeholder(_) => VariableKind::Categorical,
        }
    }
}

pub(crate) fn resolve(repo: &Repository, name: &str) -> Result<VarRef, QaError> {
    let spec = repo.spec();
    if let Some((i, v)) = spec.variable(name) {
        return Ok(VarRef::Column(i, v.kind));
    }
    if let Some((k, _)) = spec.placeholder(name) {
        return Ok(VarRef::Placeholder(k));
    }
    Err(QaError::Inconsistent(format!("unknown variable {name:?}")))
}

/// Whether `operation` is defined for a variable of `kind`.
pub fn operation_defined(operation: &str, kind: VariableKind) -> bool {
    match operation {
        "mean" | "median" | "variance" | "pearson" => kind.is_numeric(),
        "mode" => kind != VariableKind::Continuous,
        "chi_square" => kind == VariableKind::Categorical,
        _ => false,
    }
}

/// Minimum surviving rows the operation needs.
pub fn minimum_rows(operation: &str) -> usize {
    match operation {
        "variance" | "pearson" => 2,
        _ => 1,
    }
}

/// Operation name and the variables it reads, for statistic targets.
pub(crate) fn operation_of(target: &Target) -> Option<(&'static str, Vec<&str>)> {
    match target {
        Target::Univariate { stat, variable, .. } => Some((stat.as_str(), vec![variable.as_str()])),
        Target::Pearson { x, y } => Some(("pearson", vec![x.as_str(), y.as_str()])),
        Target::ChiSquare { a, b, .. } => Some(("chi_square", vec![a.as_str(), b.as_str()])),
        _ => None,
    }
}

/// Indices of data paths selected by the target and path conditions.
pub(crate) fn matching_files(repo: &Repository, target: &Target, filters: &QueryFilters) -> Result<Vec<usize>, QaError> {
    let spec = repo.spec();
    let single = match target {
        Target::RowCount { path } => Some(path),
        Target::Univariate { path: Some(p), .. } => Some(p),
        _ => None,
    };
    if let Some(p) = single {
        return Ok(repo.path_index(p).into_iter().collect());
    }
    let mut conds = Vec::with_capacity(filters.path_conditions.len());
    for c in &filters.path_conditions {
        let (k, _) = spec
            .placeholder(&c.placeholder)
            .ok_or_else(|| QaError::Inconsistent(format!("unknown placeholder {:?}", c.placeholder)))?;
        conds.push((k, &c.predicate));
    }
    let prefix = match target {
        Target::FileCount { prefix } => prefix.as_deref(),
        _ => None,
    };
    Ok((0..spec.paths.len())
        .filter(|&i| prefix.is_none_or(|p| spec.paths[i].path.starts_with(p)))
        .filter(|&i| conds.iter().all(|(k, pred)| pred.matches(repo.path_value(i, *k))))
        .collect())
}

pub(crate) fn row_filter<'f>(
    repo: &Repository,
    filters: &'f QueryFilters,
) -> Result<Vec<(usize, &'f RowPredicate)>, QaError> {
    let spec = repo.spec();
    filters
        .row_conditions
        .iter()
        .map(|c| {
            let (j, v) = spec
                .variable(&c.variable)
                .ok_or_else(|| QaError::Inconsistent(format!("unknown row variable {:?}", c.variable)))?;
            if c.predicate.is_numeric() && !v.kind.is_numeric() {
                return Err(QaError::Inconsistent(format!("numeric predicate on {:?}", c.variable)));
            }
            Ok((j, &c.predicate))
        })
        .collect()
}

/// Surviving row indices of one table.
pub(crate) fn surviving_rows(table: &TableData, conds: &[(usize, &RowPredicate)]) -> Vec<usize> {
    (0..table.n_rows)
        .filter(|&r| conds.iter().all(|(j, p)| p.matches(&table.columns[*j].values[r])))
        .collect()
}

fn cell_text(repo: &Repository, file: usize, table: &TableData, v: VarRef, r: usize) -> String {
    match v {
        VarRef::Column(j, _) => table.columns[j].values[r].render(),
        VarRef::Placeholder(k) => repo.path_value(file, k).to_string(),
    }
}

fn cell_num(table: &TableData, v: VarRef, r: usize) -> f64 {
    match v {
        VarRef::Column(j, _) => table.columns[j].values[r].as_f64().expect("numeric column"),
        VarRef::Placeholder(_) => unreachable!("placeholders are categorical"),
    }
}

fn yes_no(b: bool) -> Value {
    Value::Str(if b { "yes" } else { "no" }.into())
}

/// Exact answer for `target` under `filters`, or the reason there is none.
pub fn compute_ground_truth(cache: &TableCache<'_>, target: &Target, filters: &QueryFilters) -> Result<GroundTruth, QaError> {
    let repo = cache.repo();
    let spec = repo.spec();
    let simple = |v: Value| Ok(GroundTruth::Answer { value: v });
    match target {
        Target::ReadmePresent => return simple(yes_no(spec.readme_present)),
        Target::Title | Target::Abstract if !spec.readme_present => {
            return Ok(GroundTruth::not_possible(NotPossibleReason::ReadmeAbsent))
        }
        Target::Title => return simple(Value::Str(spec.project.title.clone())),
        Target::Abstract => return simple(Value::Str(spec.project.abstract_text.clone())),
        Target::Extension => return simple(Value::Str(spec.template.extension.as_str().into())),
        _ => {}
    }

    if let Some((op, vars)) = operation_of(target) {
        for name in &vars {
            if !operation_defined(op, resolve(repo, name)?.kind()) {
                return Ok(GroundTruth::not_possible(NotPossibleReason::InvalidOperation));
            }
        }
    }
    let files = matching_files(repo, target, filters)?;
    if let Target::FileCount { .. } = target {
        return simple(Value::Int(files.len() as i64));
    }
    if files.is_empty() {
        return Ok(GroundTruth::not_possible(NotPossibleReason::EmptyFileSet));
    }
    if let Target::RowCount { .. } = target {
        return simple(Value::Int(cache.table(files[0])?.n_rows as i64));
    }

    let conds = row_filter(repo, filters)?;
    let (op, vars) = operation_of(target).expect("statistic target");
    let refs: Vec<VarRef> = vars.iter().map(|n| resolve(repo, n)).collect::<Result<_, _>>()?;
    let mut texts: Vec<Vec<String>> = vec![Vec::new(); refs.len()];
    let mut nums: Vec<Vec<f64>> = vec![Vec::new(); refs.len()];
    for &f in &files {
        let table = cache.table(f)?;
        for r in surviving_rows(&table, &conds) {
            for (i, v) in refs.iter().enumerate() {
                if v.kind().is_numeric() {
                    nums[i].push(cell_num(&table, *v, r));
                } else {
                    texts[i].push(cell_text(repo, f, &table, *v, r));
                }
            }
        }
    }
    let n = if refs[0].kind().is_numeric() { nums[0].len() } else { texts[0].len() };
    if n == 0 {
        return Ok(GroundTruth::not_possible(NotPossibleReason::EmptyRowSet));
    }
    if n < minimum_rows(op) {
        return Ok(GroundTruth::degenerate(format!("{op} needs at least {} rows", minimum_rows(op))));
    }
    let value = match target {
        Target::Univariate { stat, .. } => match stat {
            Stat::Mean => Value::Real(stats::mean(&nums[0]).expect("non-empty")),
            Stat::Median => Value::Real(stats::median(&nums[0]).expect("non-empty")),
            Stat::Variance => Value::Real(stats::sample_variance(&nums[0]).expect("two rows")),
            Stat::Mode => {
                let owned: Vec<String>;
                let items: Vec<&str> = if refs[0].kind().is_numeric() {
                    owned = nums[0].iter().map(|x| Value::Int(*x as i64).render()).collect();
                    owned.iter().map(String::as_str).collect()
                } else {
                    texts[0].iter().map(String::as_str).collect()
                };
                let (m, _) = stats::mode(items).expect("non-empty");
                match refs[0].kind() {
                    VariableKind::DiscreteInteger => Value::Int(m.parse().expect("integer mode")),
                    _ => Value::Str(m.to_string()),
                }
            }
        },
        Target::Pearson { .. } => match stats::pearson(&nums[0], &nums[1]) {
            Some(r) => Value::Real(r),
            None => return Ok(GroundTruth::degenerate("a variable is constant over the selected rows")),
        },
        Target::ChiSquare { p_threshold, .. } => {
            let pairs = texts[0].iter().zip(&texts[1]).map(|(a, b)| (a.as_str(), b.as_str()));
            match stats::chi_square_independence(pairs) {
                Some(c) => yes_no(c.p_value <= *p_threshold),
                None => return Ok(GroundTruth::degenerate("a variable has a single level, so df = 0")),
            }
        }
        _ => unreachable!(),
    };
    Ok(GroundTruth::Answer { value })
}

/// Build a certificate for an unanswerable item from fresh evidence and
/// check that it supports the item's label.
pub fn certify_unanswerable(cache: &TableCache<'_>, item: &QAItem) -> Result<Certificate, QaError> {
    let repo = cache.repo();
    let spec = repo.spec();
    let fail = |m: String| Err(QaError::CertificationFailure(format!("{}: {m}", item.id)));
    let Some(reason) = item.ground_truth.reason() else {
        return fail("item is answerable".into());
    };
    match (reason, &item.target) {
        (NotPossibleReason::ReadmeAbsent, Target::Title | Target::Abstract) => {}
        (NotPossibleReason::ReadmeAbsent, _) => return fail("readme-absent only applies to README content".into()),
        // A count over no files is zero, not unanswerable.
        (NotPossibleReason::EmptyFileSet, Target::FileCount { .. }) => {
            return fail("empty-file-set does not apply to file counts".into())
        }
        _ => {}
    }
    let cert = match reason {
        NotPossibleReason::ReadmeAbsent => Certificate::ReadmeAbsent {
            readme_present: spec.readme_present,
        },
        NotPossibleReason::InvalidOperation => {
            let Some((op, vars)) = operation_of(&item.target) else {
                return fail("invalid-operation on a non-statistic target".into());
            };
            let mut found = None;
            for name in vars {
                let kind = resolve(repo, name)?.kind();
                if !operation_defined(op, kind) {
                    found = Some(Certificate::InvalidOperation {
                        variable: name.to_string(),
                        kind: kind.as_str().to_string(),
                        operation: op.to_string(),
                    });
                    break;
                }
            }
            match found {
                Some(c) => c,
                None => return fail("every variable supports the operation".into()),
            }
        }
        NotPossibleReason::EmptyFileSet => Certificate::EmptyFileSet {
            paths_checked: spec.paths.len(),
            matches: matching_files(repo, &item.target, &item.filters)?.len(),
        },
        NotPossibleReason::EmptyRowSet => {
            let (op, vars) = operation_of(&item.target)
                .ok_or_else(|| QaError::CertificationFailure(format!("{}: empty-row-set on a non-statistic target", item.id)))?;
            let conds = row_filter(repo, &item.filters)?;
            let mut files = Vec::new();
            let mut surviving = 0;
            for f in matching_files(repo, &item.target, &item.filters)? {
                let table = cache.table(f)?;
                let s = surviving_rows(&table, &conds).len();
                surviving += s;
                files.push(FileRowCount {
                    path: spec.paths[f].path.clone(),
                    rows: table.n_rows,
                    surviving: s,
                });
            }
            let minimum = minimum_rows(op);
            let degenerate = if surviving >= minimum {
                degenerate_evidence(cache, item, op, &vars)?
            } else {
                None
            };
            Certificate::EmptyRowSet {
                files,
                surviving,
                minimum,
                degenerate,
            }
        }
    };
    check_certificate(&cert, spec.readme_present, reason)
        .map_err(|m| QaError::CertificationFailure(format!("{}: {m}", item.id)))?;
    Ok(cert)
}

/// Name the degeneracy when enough rows survive: a constant variable for
/// correlation, or a single observed level for chi-square.
fn degenerate_evidence(cache: &TableCache<'_>, item: &QAItem, op: &str, vars: &[&str]) -> Result<Option<String>, QaError> {
    let repo = cache.repo();
    let conds = row_filter(repo, &item.filters)?;
    let files = matching_files(repo, &item.target, &item.filters)?;
    for name in vars {
        let v = resolve(repo, name)?;
        let mut first: Option<String> = None;
        let mut constant = true;
        for &f in &files {
            let table = cache.table(f)?;
            for r in surviving_rows(&table, &conds) {
                let t = cell_text(repo, f, &table, v, r);
                match &first {
                    None => first = Some(t),
                    Some(x) if *x != t => constant = false,
                    _ => {}
                }
            }
        }
        if constant && matches!(op, "pearson" | "chi_square") {
            return Ok(Some(format!("{name} takes the single value {:?}", first.unwrap_or_default())));
        }
    }
    Ok(None)
}

/// Structural consistency between a certificate and a label.
pub fn check_certificate(cert: &Certificate, readme_present: bool, reason: NotPossibleReason) -> Result<(), String> {
    if cert.reason() != reason {
        return Err(format!("certificate is for {}, label is {}", cert.reason().as_str(), reason.as_str()));
    }
    match cert {
        Certificate::ReadmeAbsent { readme_present: p } => {
            if *p || readme_present {
                return Err("repository has a README".into());
            }
        }
        Certificate::EmptyFileSet { matches, .. } => {
            if *matches != 0 {
                return Err(format!("{matches} files match"));
            }
        }
        Certificate::EmptyRowSet {
            files,
            surviving,
            minimum,
            degenerate,
        } => {
            if files.iter().map(|f| f.surviving).sum::<usize>() != *surviving {
                return Err("per-file counts do not add up".into());
            }
            if *surviving >= *minimum && degenerate.is_none() {
                return Err(format!("{surviving} rows survive and nothing is degenerate"));
            }
        }
        Certificate::InvalidOperation { kind, operation, .. } => {
            let k = match kind.as_str() {
                "categorical" => VariableKind::Categorical,
                "discrete_integer" => VariableKind::DiscreteInteger,
                "continuous" => VariableKind::Continuous,
                other => return Err(format!("unknown kind {other}")),
            };
            if operation_defined(operation, k) {
                return Err(format!("{operation} is defined for {kind}"));
            }
        }
    }
    Ok(())
}
