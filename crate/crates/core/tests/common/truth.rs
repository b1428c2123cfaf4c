//! Recomputes answers from exported files, without the library's
//! statistics, decoders or truth engine.

use std::collections::{BTreeMap, HashMap};

use reposim::materializer::export_repository;
use reposim::qaengine::{
    Certificate, GroundTruth, NotPossibleReason, PathPredicate, QAItem, RowPredicate, Stat, Target,
};
use reposim::repospec::{Repository, VariableKind};
use reposim::value::Value;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::read_independent;

/// Exported files read back without the library's decoders.
pub struct Exported {
    pub tables: Vec<(Vec<String>, Vec<Vec<String>>)>,
    pub readme: bool,
}

pub fn export(repo: &Repository) -> Exported {
    let dir = tempfile::tempdir().unwrap();
    export_repository(repo, dir.path()).unwrap();
    let ext = repo.spec().template.extension.as_str();
    let tables = repo
        .data_paths()
        .map(|p| read_independent(&std::fs::read(dir.path().join(p)).unwrap(), ext))
        .collect();
    Exported {
        tables,
        readme: dir.path().join("README.md").exists(),
    }
}

#[derive(Debug, PartialEq)]
pub enum Truth {
    Int(i64),
    Real(f64),
    Text(String),
    None(NotPossibleReason),
}

pub fn kind_of(repo: &Repository, name: &str) -> VariableKind {
    let spec = repo.spec();
    if let Some(v) = spec.variables.iter().find(|v| v.name == name) {
        return v.kind;
    }
    assert!(spec.placeholders.iter().any(|p| p.name == name), "unknown {name}");
    VariableKind::Categorical
}

pub fn defined(op: &str, k: VariableKind) -> bool {
    match op {
        "mean" | "median" | "variance" | "pearson" => k != VariableKind::Categorical,
        "mode" => k != VariableKind::Continuous,
        _ => k == VariableKind::Categorical,
    }
}

pub fn row_ok(pred: &RowPredicate, cell: &str) -> bool {
    let x = || cell.parse::<f64>().unwrap();
    match pred {
        RowPredicate::Equals(s) => cell == s,
        RowPredicate::OneOf(v) => v.iter().any(|s| s == cell),
        RowPredicate::LessThan(t) => x() < *t,
        RowPredicate::GreaterThan(t) => x() > *t,
        RowPredicate::AtLeast(t) => x() >= *t,
        RowPredicate::AtMost(t) => x() <= *t,
        RowPredicate::InRange([a, b]) => *a <= x() && x() <= *b,
    }
}

pub fn placeholder_value(repo: &Repository, file: usize, name: &str) -> String {
    let spec = repo.spec();
    let k = spec.placeholders.iter().position(|p| p.name == name).unwrap();
    spec.placeholders[k].values[spec.paths[file].assignment[k]].clone()
}

pub fn oracle(repo: &Repository, ex: &Exported, item: &QAItem) -> Truth {
    let spec = repo.spec();
    let f = &item.filters;
    match &item.target {
        Target::ReadmePresent => return Truth::Text(if ex.readme { "yes" } else { "no" }.into()),
        Target::Title | Target::Abstract if !ex.readme => return Truth::None(NotPossibleReason::ReadmeAbsent),
        Target::Title => return Truth::Text(spec.project.title.clone()),
        Target::Abstract => return Truth::Text(spec.project.abstract_text.clone()),
        Target::Extension => return Truth::Text(spec.template.extension.as_str().into()),
        _ => {}
    }
    let (op, vars): (&str, Vec<&str>) = match &item.target {
        Target::Univariate { stat, variable, .. } => (stat.as_str(), vec![variable]),
        Target::Pearson { x, y } => ("pearson", vec![x, y]),
        Target::ChiSquare { a, b, .. } => ("chi_square", vec![a, b]),
        _ => ("", vec![]),
    };
    if vars.iter().any(|v| !defined(op, kind_of(repo, v))) {
        return Truth::None(NotPossibleReason::InvalidOperation);
    }
    let files: Vec<usize> = (0..spec.paths.len())
        .filter(|&i| {
            let p = &spec.paths[i].path;
            match &item.target {
                Target::RowCount { path } | Target::Univariate { path: Some(path), .. } => return p == path,
                Target::FileCount { prefix: Some(pre) } if !p.starts_with(pre.as_str()) => return false,
                _ => {}
            }
            f.path_conditions.iter().all(|c| {
                let v = placeholder_value(repo, i, &c.placeholder);
                match &c.predicate {
                    PathPredicate::Equals(s) => *s == v,
                    PathPredicate::OneOf(ss) => ss.contains(&v),
                }
            })
        })
        .collect();
    match &item.target {
        Target::FileCount { .. } => return Truth::Int(files.len() as i64),
        _ if files.is_empty() => return Truth::None(NotPossibleReason::EmptyFileSet),
        Target::RowCount { .. } => return Truth::Int(ex.tables[files[0]].1.len() as i64),
        _ => {}
    }
    // Pool the selected cells as text.
    let mut cols: Vec<Vec<String>> = vec![Vec::new(); vars.len()];
    for &i in &files {
        let (header, rows) = &ex.tables[i];
        let pos = |n: &str| header.iter().position(|h| h == n);
        for row in rows {
            let keep = f.row_conditions.iter().all(|c| row_ok(&c.predicate, &row[pos(&c.variable).unwrap()]));
            if !keep {
                continue;
            }
            for (j, v) in vars.iter().enumerate() {
                cols[j].push(match pos(v) {
                    Some(c) => row[c].clone(),
                    None => placeholder_value(repo, i, v),
                });
            }
        }
    }
    let n = cols[0].len();
    let need = if matches!(op, "variance" | "pearson") { 2 } else { 1 };
    if n < need {
        return Truth::None(NotPossibleReason::EmptyRowSet);
    }
    let num = |c: &Vec<String>| c.iter().map(|s| s.parse::<f64>().unwrap()).collect::<Vec<f64>>();
    match &item.target {
        Target::Univariate { stat, .. } => {
            let xs = || num(&cols[0]);
            match stat {
                Stat::Mean => Truth::Real(xs().iter().sum::<f64>() / n as f64),
                Stat::Median => {
                    let mut v = xs();
                    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    Truth::Real(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
                }
                Stat::Variance => {
                    let v = xs();
                    let m = v.iter().sum::<f64>() / n as f64;
                    Truth::Real(v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64)
                }
                Stat::Mode => {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for s in &cols[0] {
                        *counts.entry(s).or_default() += 1;
                    }
                    let max = *counts.values().max().unwrap();
                    let best = counts.iter().find(|(_, c)| **c == max).unwrap().0.to_string();
                    match kind_of(repo, vars[0]) {
                        VariableKind::DiscreteInteger => Truth::Int(best.parse().unwrap()),
                        _ => Truth::Text(best),
                    }
                }
            }
        }
        Target::Pearson { .. } => {
            let (x, y) = (num(&cols[0]), num(&cols[1]));
            let mx = x.iter().sum::<f64>() / n as f64;
            let my = y.iter().sum::<f64>() / n as f64;
            let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
            let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
            if sxx == 0.0 || syy == 0.0 {
                return Truth::None(NotPossibleReason::EmptyRowSet);
            }
            Truth::Real(sxy / (sxx * syy).sqrt())
        }
        Target::ChiSquare { p_threshold, .. } => {
            let mut cell: HashMap<(&str, &str), f64> = HashMap::new();
            let mut ra: BTreeMap<&str, f64> = BTreeMap::new();
            let mut cb: BTreeMap<&str, f64> = BTreeMap::new();
            for (a, b) in cols[0].iter().zip(&cols[1]) {
                *cell.entry((a, b)).or_default() += 1.0;
                *ra.entry(a).or_default() += 1.0;
                *cb.entry(b).or_default() += 1.0;
            }
            if ra.len() < 2 || cb.len() < 2 {
                return Truth::None(NotPossibleReason::EmptyRowSet);
            }
            let mut stat = 0.0;
            for (a, na) in &ra {
                for (b, nb) in &cb {
                    let e = na * nb / n as f64;
                    let o = cell.get(&(*a, *b)).copied().unwrap_or(0.0);
                    stat += (o - e).powi(2) / e;
                }
            }
            let df = ((ra.len() - 1) * (cb.len() - 1)) as f64;
            let p = ChiSquared::new(df).unwrap().sf(stat);
            assert!(
                (p - p_threshold).abs() > 1e-9,
                "{}: p-value {p} sits on the threshold",
                item.id
            );
            Truth::Text(if p <= *p_threshold { "yes" } else { "no" }.into())
        }
        _ => unreachable!(),
    }
}

pub fn agrees(item: &QAItem, want: &Truth) -> bool {
    match (&item.ground_truth, want) {
        (GroundTruth::NotPossible { reason, .. }, Truth::None(r)) => reason == r,
        (GroundTruth::Answer { value }, w) => match (value, w) {
            (Value::Int(a), Truth::Int(b)) => a == b,
            (Value::Str(a), Truth::Text(b)) => a == b,
            (Value::Real(a), Truth::Real(b)) => (a - b).abs() <= 1e-9 * b.abs().max(1.0),
            _ => false,
        },
        _ => false,
    }
}

/// Checks a certificate against the exported files; panics on a mismatch.
pub fn verify_certificate(repo: &Repository, ex: &Exported, item: &QAItem) {
    match (&item.ground_truth, &item.certificate) {
        (GroundTruth::Answer { .. }, None) => return,
        (GroundTruth::NotPossible { reason, .. }, Some(cert)) => assert_eq!(cert.reason(), *reason),
        other => panic!("{}: truth and certificate disagree: {other:?}", item.id),
    }
    match item.certificate.as_ref().unwrap() {
        Certificate::ReadmeAbsent { readme_present } => assert!(!readme_present && !ex.readme),
        Certificate::EmptyFileSet { paths_checked, matches } => {
            assert_eq!(*paths_checked, repo.spec().paths.len());
            assert_eq!(*matches, 0);
            if let Target::RowCount { path } | Target::Univariate { path: Some(path), .. } = &item.target {
                assert!(repo.data_paths().all(|p| p != path));
            }
        }
        Certificate::InvalidOperation { variable, kind, operation } => {
            let k = kind_of(repo, variable);
            assert_eq!(k.as_str(), kind);
            assert!(!defined(operation, k));
        }
        Certificate::EmptyRowSet { files, surviving, minimum, degenerate } => {
            let mut total = 0;
            for fc in files {
                let idx = repo.data_paths().position(|p| p == fc.path).unwrap();
                let (header, rows) = &ex.tables[idx];
                assert_eq!(fc.rows, rows.len());
                let s = rows
                    .iter()
                    .filter(|row| {
                        item.filters.row_conditions.iter().all(|c| {
                            let j = header.iter().position(|h| *h == c.variable).unwrap();
                            row_ok(&c.predicate, &row[j])
                        })
                    })
                    .count();
                assert_eq!(fc.surviving, s, "{}", item.id);
                total += s;
            }
            assert_eq!(total, *surviving);
            assert!(total < *minimum || degenerate.is_some());
        }
    }
}

/// Upper tail by quadrature: t = s^2 removes the singularity at zero for
/// the lower part, Gauss-Legendre panels cover the rest.
pub fn chi_sf_quadrature(df: f64, x: f64) -> f64 {
    let k = df / 2.0;
    let ln_gamma_half = |a: f64| -> f64 {
        // a is an integer or half-integer.
        let (mut z, mut acc) = if a.fract() == 0.0 { (1.0, 0.0) } else { (0.5, 0.5 * std::f64::consts::PI.ln()) };
        while z < a - 1e-9 {
            acc += z.ln();
            z += 1.0;
        }
        acc
    };
    let norm = -(k * 2f64.ln() + ln_gamma_half(k));
    let density = |t: f64| ((k - 1.0) * t.ln() - t / 2.0 + norm).exp();
    const NODES: [(f64, f64); 5] = [
        (0.0, 0.568_888_888_888_888_9),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let integrate = |g: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize| -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
                let (m, r) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
                NODES.iter().map(|(n, w)| w * g(m + r * n)).sum::<f64>() * r
            })
            .sum()
    };
    // Lower part on [0, x] with t = s^2: integrand 2 s f(s^2).
    let lower = integrate(&|s: f64| if s == 0.0 { 0.0 } else { 2.0 * s * density(s * s) }, 0.0, x.sqrt(), 4000);
    if x < df {
        return 1.0 - lower;
    }
    integrate(&density, x, x + 60.0 + 20.0 * df.sqrt(), 4000)
}
