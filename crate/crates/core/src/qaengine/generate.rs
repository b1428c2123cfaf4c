//! Question construction: templates, filters and steering toward or away
//! from answerability.

use super::truth::{certify_unanswerable, compute_ground_truth, matching_files, TableCache};
use super::types::*;
use super::QaError;
use crate::repospec::paths::render_indices;
use crate::repospec::{Extension, FileVariable, Repository, VariableKind, VariableRole};
use crate::seedstream::{RandomStream, SeedContext};
use crate::value::{format_real, round_sig, Value};

const SIG_FIGS: [u32; 3] = [2, 3, 4];
const P_THRESHOLDS: [f64; 2] = [0.01, 0.05];
const ABSENT_TRIES: usize = 30;
const THRESHOLD_SIG_FIGS: u32 = 3;

/// Which way to push a generated item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Steer {
    Any,
    Answerable,
    Unanswerable,
}

/// Question types whose answerability the generator can choose.
pub fn steerable(qtype: QType) -> bool {
    matches!(
        qtype,
        QType::CountRows
            | QType::UnivariateSingleFile
            | QType::UnivariateCondition
            | QType::BivariateStatistic
            | QType::BivariateHypothesis
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mech {
    Natural,
    EmptyFiles,
    InvalidOp,
    EmptyRows,
}

struct Draft {
    target: Target,
    filters: QueryFilters,
    answer_kind: AnswerKind,
    text: String,
}

/// Build one item from the stream named by `seed`, with ground truth and,
/// when unanswerable, a certificate.
pub fn generate_question(cache: &TableCache<'_>, qtype: QType, seed: &SeedContext) -> Result<QAItem, QaError> {
    generate_steered(cache, qtype, seed, Steer::Any)
}

pub fn generate_steered(cache: &TableCache<'_>, qtype: QType, seed: &SeedContext, steer: Steer) -> Result<QAItem, QaError> {
    let repo = cache.repo();
    let spec = repo.spec();
    let mut rng = seed.stream();
    let sig_figs = SIG_FIGS[rng.index(SIG_FIGS.len())];
    let mech = if steer == Steer::Unanswerable && steerable(qtype) {
        let options: &[Mech] = if qtype == QType::CountRows {
            &[Mech::EmptyFiles]
        } else {
            &[Mech::EmptyFiles, Mech::InvalidOp, Mech::EmptyRows]
        };
        options[rng.index(options.len())]
    } else {
        Mech::Natural
    };
    let mut g = Gen { cache, repo, rng };
    let draft = match qtype {
        QType::Readme => Draft {
            target: Target::ReadmePresent,
            filters: QueryFilters::default(),
            answer_kind: yes_no_kind(),
            text: "Yes or no, does this repository have a README file?".into(),
        },
        QType::Title => Draft {
            target: Target::Title,
            filters: QueryFilters::default(),
            answer_kind: AnswerKind::OpenString,
            text: "What is the title of the project described in this repository's README?".into(),
        },
        QType::Abstract => Draft {
            target: Target::Abstract,
            filters: QueryFilters::default(),
            answer_kind: AnswerKind::OpenString,
            text: "What is the abstract of the project described in this repository's README? Quote it in full.".into(),
        },
        QType::Extension => Draft {
            target: Target::Extension,
            filters: QueryFilters::default(),
            answer_kind: AnswerKind::CategoricalFinite {
                options: Extension::ALL.iter().map(|e| e.as_str().to_string()).collect(),
            },
            text: "What file extension do the data files in this repository use?".into(),
        },
        QType::CountRows => g.count_rows(mech),
        QType::DirectoryPrefix => g.directory_prefix(),
        QType::DirectoryCondition => g.directory_condition(),
        QType::UnivariateSingleFile => g.univariate(mech, true)?,
        QType::UnivariateCondition => g.univariate(mech, false)?,
        QType::BivariateStatistic => g.pearson(mech)?,
        QType::BivariateHypothesis => g.chi_square(mech)?,
    };
    let ground_truth = compute_ground_truth(cache, &draft.target, &draft.filters)?;
    let preamble = match draft.answer_kind {
        AnswerKind::Continuous => format!("Report numeric answers to {sig_figs} significant figures."),
        _ => String::new(),
    };
    let mut item = QAItem {
        schema: QA_SCHEMA.to_string(),
        id: format!("{}:{}", spec.master_seed, seed.stage_label),
        repo_seed: spec.master_seed,
        category: qtype.category(),
        qtype,
        preamble,
        template_text: draft.text,
        paraphrases: Vec::new(),
        target: draft.target,
        filters: draft.filters,
        answer_kind: draft.answer_kind,
        sig_figs,
        ground_truth,
        certificate: None,
    };
    if !item.ground_truth.is_answerable() {
        item.certificate = Some(certify_unanswerable(cache, &item)?);
    }
    Ok(item)
}

fn yes_no_kind() -> AnswerKind {
    AnswerKind::CategoricalFinite {
        options: vec!["yes".into(), "no".into()],
    }
}

fn stat_phrase(stat: Stat) -> &'static str {
    match stat {
        Stat::Mean => "mean",
        Stat::Median => "median",
        Stat::Variance => "sample variance",
        Stat::Mode => "most common value",
    }
}

/// Numbers in question text: whole values without a fraction.
fn num_text(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format_real(x)
    }
}

fn row_condition_text(c: &RowCondition) -> String {
    let v = &c.variable;
    match &c.predicate {
        RowPredicate::Equals(s) => format!("{v} is {s}"),
        RowPredicate::OneOf(ss) => format!("{v} is one of {}", ss.join(", ")),
        RowPredicate::LessThan(t) => format!("{v} is less than {}", num_text(*t)),
        RowPredicate::GreaterThan(t) => format!("{v} is greater than {}", num_text(*t)),
        RowPredicate::AtLeast(t) => format!("{v} is at least {}", num_text(*t)),
        RowPredicate::AtMost(t) => format!("{v} is at most {}", num_text(*t)),
        RowPredicate::InRange([a, b]) => format!("{v} is between {} and {} inclusive", num_text(*a), num_text(*b)),
    }
}

fn path_condition_text(repo: &Repository, c: &PathCondition) -> String {
    let (_, ph) = repo.spec().placeholder(&c.placeholder).expect("known placeholder");
    match &c.predicate {
        PathPredicate::Equals(v) => format!("{} is {}", ph.name, ph.render_value(v)),
        PathPredicate::OneOf(vs) => {
            let shown: Vec<String> = vs.iter().map(|v| ph.render_value(v)).collect();
            format!("{} is one of {}", ph.name, shown.join(", "))
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Leading condition clauses followed by the question proper.
fn with_clauses(repo: &Repository, filters: &QueryFilters, question: &str) -> String {
    let mut out = String::new();
    if !filters.path_conditions.is_empty() {
        let parts: Vec<String> = filters.path_conditions.iter().map(|c| path_condition_text(repo, c)).collect();
        out.push_str(&format!("only considering files where {}, ", parts.join(" and ")));
    }
    if !filters.row_conditions.is_empty() {
        let parts: Vec<String> = filters.row_conditions.iter().map(row_condition_text).collect();
        out.push_str(&format!("only considering rows where {}, ", parts.join(" and ")));
    }
    out.push_str(question);
    capitalize(&out)
}

struct Gen<'c, 'r> {
    cache: &'c TableCache<'r>,
    repo: &'r Repository,
    rng: RandomStream,
}

impl Gen<'_, '_> {
    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        self.rng.choose(items)
    }

    fn vars(&self, keep: impl Fn(&FileVariable) -> bool) -> Vec<&FileVariable> {
        self.repo.spec().variables.iter().filter(|v| keep(v)).collect()
    }

    fn numeric_vars(&self) -> Vec<String> {
        self.vars(|v| v.kind.is_numeric()).into_iter().map(|v| v.name.clone()).collect()
    }

    fn categorical_vars(&self) -> Vec<String> {
        self.vars(|v| v.kind == VariableKind::Categorical && v.role == VariableRole::Independent)
            .into_iter()
            .map(|v| v.name.clone())
            .collect()
    }

    fn random_path(&mut self) -> String {
        let spec = self.repo.spec();
        spec.paths[self.rng.index(spec.paths.len())].path.clone()
    }

    /// A well-formed data path that is not in the repository: an unsampled
    /// combination when one exists, otherwise a different extension.
    fn absent_path(&mut self) -> String {
        let spec = self.repo.spec();
        if spec.paths.len() < spec.cross_product_size {
            for _ in 0..ABSENT_TRIES {
                let assignment: Vec<usize> = spec.placeholders.iter().map(|p| self.rng.index(p.values.len())).collect();
                let p = render_indices(&spec.template, &spec.placeholders, &assignment);
                if !self.repo.has_path(&p) {
                    return p;
                }
            }
        }
        let base = self.random_path();
        let ext = spec.template.extension;
        let others: Vec<Extension> = Extension::ALL.into_iter().filter(|e| *e != ext).collect();
        let swap = *self.pick(&others);
        let stem = base.strip_suffix(ext.as_str()).expect("path ends with its extension");
        format!("{stem}{}", swap.as_str())
    }

    /// Conditions satisfied by an existing path, so at least one file matches.
    fn satisfiable_path_conditions(&mut self) -> Vec<PathCondition> {
        let spec = self.repo.spec();
        let file = self.rng.index(spec.paths.len());
        let n = spec.placeholders.len();
        let count = if n >= 2 && self.rng.bernoulli(0.4) { 2 } else { 1 };
        let mut ks: Vec<usize> = (0..n).collect();
        self.rng.shuffle(&mut ks);
        ks.truncate(count);
        ks.sort_unstable();
        ks.into_iter()
            .map(|k| {
                let ph = &spec.placeholders[k];
                let v = self.repo.path_value(file, k).to_string();
                let predicate = if ph.values.len() >= 2 && self.rng.bernoulli(0.3) {
                    let mut other = self.rng.index(ph.values.len());
                    if ph.values[other] == v {
                        other = (other + 1) % ph.values.len();
                    }
                    let mut vs = vec![v, ph.values[other].clone()];
                    vs.sort();
                    PathPredicate::OneOf(vs)
                } else {
                    PathPredicate::Equals(v)
                };
                PathCondition {
                    placeholder: ph.name.clone(),
                    predicate,
                }
            })
            .collect()
    }

    /// Equality conditions no data path satisfies, if one can be found.
    fn absent_path_conditions(&mut self) -> Option<Vec<PathCondition>> {
        let spec = self.repo.spec();
        let n = spec.placeholders.len();
        for _ in 0..ABSENT_TRIES {
            let count = 1 + self.rng.index(n);
            let mut ks: Vec<usize> = (0..n).collect();
            self.rng.shuffle(&mut ks);
            ks.truncate(count);
            ks.sort_unstable();
            let conds: Vec<PathCondition> = ks
                .iter()
                .map(|&k| {
                    let ph = &spec.placeholders[k];
                    PathCondition {
                        placeholder: ph.name.clone(),
                        predicate: PathPredicate::Equals(ph.values[self.rng.index(ph.values.len())].clone()),
                    }
                })
                .collect();
            let filters = QueryFilters {
                path_conditions: conds.clone(),
                row_conditions: Vec::new(),
            };
            let matched = matching_files(self.repo, &Target::FileCount { prefix: None }, &filters).ok()?;
            if matched.is_empty() {
                return Some(conds);
            }
        }
        None
    }

    /// A cell of `variable` from a random row of a random file in `files`.
    fn sample_cell(&mut self, files: &[usize], variable: &str) -> Result<Option<Value>, QaError> {
        if files.is_empty() {
            return Ok(None);
        }
        let f = files[self.rng.index(files.len())];
        let table = self.cache.table(f)?;
        let col = table
            .column(variable)
            .ok_or_else(|| QaError::Inconsistent(format!("no column {variable:?}")))?;
        Ok(Some(col.values[self.rng.index(table.n_rows)].clone()))
    }

    /// A row condition on some variable other than `avoid`, anchored at an
    /// observed value.
    fn row_condition(&mut self, files: &[usize], avoid: &[&str]) -> Result<Option<RowCondition>, QaError> {
        let candidates: Vec<FileVariable> = self
            .vars(|v| v.role != VariableRole::Identifier && !avoid.contains(&v.name.as_str()))
            .into_iter()
            .cloned()
            .collect();
        if candidates.is_empty() {
            return Ok(None);
        }
        let var = self.pick(&candidates).clone();
        let Some(cell) = self.sample_cell(files, &var.name)? else {
            return Ok(None);
        };
        let predicate = if var.kind.is_numeric() {
            let t = round_sig(cell.as_f64().expect("numeric"), THRESHOLD_SIG_FIGS);
            match self.rng.index(5) {
                0 => RowPredicate::LessThan(t),
                1 => RowPredicate::GreaterThan(t),
                2 => RowPredicate::AtLeast(t),
                3 => RowPredicate::AtMost(t),
                _ => {
                    let w = round_sig(t.abs().max(1.0) * self.rng.uniform(0.1, 0.5), THRESHOLD_SIG_FIGS);
                    RowPredicate::InRange([round_sig(t - w, 4), round_sig(t + w, 4)])
                }
            }
        } else {
            let v = cell.render();
            let declared = match var.dist() {
                Some(crate::seedstream::DistributionSpec::Categorical { values, .. }) => values.clone(),
                _ => Vec::new(),
            };
            let others: Vec<&String> = declared.iter().filter(|d| **d != v).collect();
            if !others.is_empty() && self.rng.bernoulli(0.3) {
                let mut vs = vec![v, (*self.pick(&others)).clone()];
                vs.sort();
                RowPredicate::OneOf(vs)
            } else {
                RowPredicate::Equals(v)
            }
        };
        Ok(Some(RowCondition {
            variable: var.name,
            predicate,
        }))
    }

    /// A numeric condition no row can satisfy: above twice the largest
    /// magnitude seen in the selected files.
    fn impossible_row_condition(&mut self, files: &[usize]) -> Result<Option<RowCondition>, QaError> {
        let numeric = self.numeric_vars();
        if numeric.is_empty() {
            return Ok(None);
        }
        let var = self.pick(&numeric).clone();
        let mut max = f64::NEG_INFINITY;
        for &f in files {
            let table = self.cache.table(f)?;
            let col = table.column(&var).expect("known column");
            for v in &col.values {
                max = max.max(v.as_f64().expect("numeric"));
            }
        }
        if !max.is_finite() {
            max = 0.0;
        }
        Ok(Some(RowCondition {
            variable: var,
            predicate: RowPredicate::GreaterThan(round_sig(max + max.abs() + 1.0, THRESHOLD_SIG_FIGS)),
        }))
    }

    fn count_rows(&mut self, mech: Mech) -> Draft {
        let path = if mech == Mech::EmptyFiles {
            self.absent_path()
        } else {
            self.random_path()
        };
        Draft {
            text: format!("How many data rows does the file {path} contain, not counting the header?"),
            target: Target::RowCount { path },
            filters: QueryFilters::default(),
            answer_kind: AnswerKind::Integer,
        }
    }

    fn directory_prefix(&mut self) -> Draft {
        let path = self.random_path();
        let cuts: Vec<usize> = path.char_indices().filter(|(_, c)| matches!(c, '/' | '_' | '-')).map(|(i, _)| i).collect();
        let prefix = if cuts.is_empty() {
            path.clone()
        } else {
            path[..=*self.pick(&cuts)].to_string()
        };
        Draft {
            text: format!("How many data files have a path that begins with {prefix}?"),
            target: Target::FileCount { prefix: Some(prefix) },
            filters: QueryFilters::default(),
            answer_kind: AnswerKind::Integer,
        }
    }

    fn directory_condition(&mut self) -> Draft {
        let filters = QueryFilters {
            path_conditions: self.satisfiable_path_conditions(),
            row_conditions: Vec::new(),
        };
        Draft {
            text: with_clauses(self.repo, &filters, "how many data files are there?"),
            target: Target::FileCount { prefix: None },
            filters,
            answer_kind: AnswerKind::Integer,
        }
    }

    /// File selection for pooled questions. Falls back to a row-level
    /// failure when no absent combination of path values exists.
    fn pooled_selection(&mut self, mech: Mech) -> (Mech, Vec<PathCondition>) {
        match mech {
            Mech::EmptyFiles => match self.absent_path_conditions() {
                Some(c) => (mech, c),
                None => (Mech::EmptyRows, Vec::new()),
            },
            _ if self.rng.bernoulli(0.5) => (mech, self.satisfiable_path_conditions()),
            _ => (mech, Vec::new()),
        }
    }

    fn selected_files(&self, path_conditions: &[PathCondition]) -> Result<Vec<usize>, QaError> {
        let filters = QueryFilters {
            path_conditions: path_conditions.to_vec(),
            row_conditions: Vec::new(),
        };
        matching_files(self.repo, &Target::FileCount { prefix: None }, &filters)
    }

    fn univariate(&mut self, mech: Mech, single_file: bool) -> Result<Draft, QaError> {
        let (mut mech, mut path_conditions) = (mech, Vec::new());
        let path;
        let files;
        if single_file {
            if mech == Mech::EmptyFiles {
                path = Some(self.absent_path());
                files = Vec::new();
            } else {
                let p = self.random_path();
                files = vec![self.repo.path_index(&p).expect("sampled path")];
                path = Some(p);
            }
        } else {
            (mech, path_conditions) = self.pooled_selection(mech);
            path = None;
            files = self.selected_files(&path_conditions)?;
        }

        let numeric = self.numeric_vars();
        let mode_ok: Vec<String> = self
            .vars(|v| {
                v.kind == VariableKind::DiscreteInteger
                    || (v.kind == VariableKind::Categorical && v.role == VariableRole::Independent)
            })
            .into_iter()
            .map(|v| v.name.clone())
            .collect();
        let (stat, variable) = if mech == Mech::InvalidOp {
            let categorical: Vec<String> = self
                .vars(|v| v.kind == VariableKind::Categorical)
                .into_iter()
                .map(|v| v.name.clone())
                .collect();
            let continuous: Vec<String> = self
                .vars(|v| v.kind == VariableKind::Continuous)
                .into_iter()
                .map(|v| v.name.clone())
                .collect();
            let mut options: Vec<(Stat, &Vec<String>)> = Vec::new();
            if !categorical.is_empty() {
                options.extend([Stat::Mean, Stat::Median, Stat::Variance].map(|s| (s, &categorical)));
            }
            if !continuous.is_empty() {
                options.push((Stat::Mode, &continuous));
            }
            let (stat, pool) = *self.pick(&options);
            (stat, self.pick(pool).clone())
        } else {
            let stats: &[Stat] = if mode_ok.is_empty() {
                &[Stat::Mean, Stat::Median, Stat::Variance]
            } else {
                &[Stat::Mean, Stat::Median, Stat::Variance, Stat::Mode]
            };
            let stat = *self.pick(stats);
            let pool = if stat == Stat::Mode { &mode_ok } else { &numeric };
            (stat, self.pick(pool).clone())
        };

        let mut row_conditions = Vec::new();
        match mech {
            Mech::EmptyRows => row_conditions.extend(self.impossible_row_condition(&files)?),
            Mech::Natural if self.rng.bernoulli(if single_file { 0.3 } else { 0.7 }) => {
                row_conditions.extend(self.row_condition(&files, &[&variable])?)
            }
            _ => {}
        }
        let filters = QueryFilters {
            path_conditions,
            row_conditions,
        };
        let answer_kind = self.univariate_kind(stat, &variable);
        let question = match &path {
            Some(p) => format!(
                "in the file {p}, what is the {} of the variable {variable}?",
                stat_phrase(stat)
            ),
            None => format!(
                "what is the {} of the variable {variable}, pooling rows across all matching data files?",
                stat_phrase(stat)
            ),
        };
        let text = with_clauses(self.repo, &filters, &question);
        Ok(Draft {
            target: Target::Univariate { stat, variable, path },
            filters,
            answer_kind,
            text,
        })
    }

    fn univariate_kind(&self, stat: Stat, variable: &str) -> AnswerKind {
        let (_, v) = self.repo.spec().variable(variable).expect("known variable");
        match (stat, v.kind) {
            (Stat::Mode, VariableKind::DiscreteInteger) => AnswerKind::Integer,
            (Stat::Mode, VariableKind::Categorical) => match v.dist() {
                Some(crate::seedstream::DistributionSpec::Categorical { values, .. }) => {
                    AnswerKind::CategoricalFinite { options: values.clone() }
                }
                _ => AnswerKind::OpenString,
            },
            _ => AnswerKind::Continuous,
        }
    }

    fn pearson(&mut self, mech: Mech) -> Result<Draft, QaError> {
        let (mech, path_conditions) = self.pooled_selection(mech);
        let files = self.selected_files(&path_conditions)?;
        let numeric = self.numeric_vars();
        let categorical: Vec<String> = self
            .vars(|v| v.kind == VariableKind::Categorical)
            .into_iter()
            .map(|v| v.name.clone())
            .collect();
        let invalid = (mech == Mech::InvalidOp && !categorical.is_empty()) || numeric.len() < 2;
        let (x, y) = if invalid && categorical.is_empty() {
            (numeric[0].clone(), numeric[0].clone())
        } else if invalid {
            let bad = self.pick(&categorical).clone();
            let good = self.pick(&numeric).clone();
            if self.rng.bernoulli(0.5) {
                (bad, good)
            } else {
                (good, bad)
            }
        } else {
            let mut pool = numeric.clone();
            self.rng.shuffle(&mut pool);
            (pool[0].clone(), pool[1].clone())
        };
        let mut row_conditions = Vec::new();
        match mech {
            Mech::EmptyRows => row_conditions.extend(self.impossible_row_condition(&files)?),
            Mech::Natural if self.rng.bernoulli(0.3) => row_conditions.extend(self.row_condition(&files, &[&x, &y])?),
            _ => {}
        }
        let filters = QueryFilters {
            path_conditions,
            row_conditions,
        };
        let text = with_clauses(
            self.repo,
            &filters,
            &format!(
                "what is the Pearson correlation coefficient between the variables {x} and {y}, pooling rows across all matching data files?"
            ),
        );
        Ok(Draft {
            target: Target::Pearson { x, y },
            filters,
            answer_kind: AnswerKind::Continuous,
            text,
        })
    }

    fn chi_square(&mut self, mech: Mech) -> Result<Draft, QaError> {
        let (mech, path_conditions) = self.pooled_selection(mech);
        let files = self.selected_files(&path_conditions)?;
        let mut categorical = self.categorical_vars();
        categorical.extend(self.repo.spec().placeholders.iter().map(|p| p.name.clone()));
        let numeric = self.numeric_vars();
        let invalid = (mech == Mech::InvalidOp || categorical.len() < 2) && !numeric.is_empty();
        let (a, b) = if invalid {
            let bad = self.pick(&numeric).clone();
            let good = if categorical.is_empty() {
                self.pick(&numeric).clone()
            } else {
                self.pick(&categorical).clone()
            };
            if self.rng.bernoulli(0.5) {
                (bad, good)
            } else {
                (good, bad)
            }
        } else {
            let mut pool = categorical.clone();
            self.rng.shuffle(&mut pool);
            (pool[0].clone(), pool[1].clone())
        };
        let p_threshold = *self.pick(&P_THRESHOLDS);
        let mut row_conditions = Vec::new();
        match mech {
            Mech::EmptyRows => row_conditions.extend(self.impossible_row_condition(&files)?),
            Mech::Natural if self.rng.bernoulli(0.3) => row_conditions.extend(self.row_condition(&files, &[&a, &b])?),
            _ => {}
        }
        let filters = QueryFilters {
            path_conditions,
            row_conditions,
        };
        let text = with_clauses(
            self.repo,
            &filters,
            &format!(
                "do {a} and {b} show a significant association under a chi-square test of independence at significance level {p_threshold}, pooling rows across all matching data files?"
            ),
        );
        Ok(Draft {
            target: Target::ChiSquare { a, b, p_threshold },
            filters,
            answer_kind: AnswerKind::ThreeClass,
            text,
        })
    }
}
