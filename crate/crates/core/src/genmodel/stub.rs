//! Deterministic backend: every response is a function of the request's
//! seed tag and payload, built from small word banks and expression patterns.

use serde_json::Value as Json;

use super::schema::*;
use super::{Backend, BackendError, GenerationRequest, Stage};
use crate::repospec::expr::VarType;
use crate::repospec::types::{Connector, NamedDescription, PlaceholderKind, VariableKind, VariableRole};
use crate::seedstream::{DistributionSpec, RandomStream};
use crate::value::{format_real, round_sig};

pub const STUB_MODEL_ID: &str = "stub-v1";

#[derive(Debug, Clone, Default)]
pub struct StubBackend;

impl StubBackend {
    pub fn new() -> Self {
        Self
    }
}

impl Backend for StubBackend {
    fn model_id(&self) -> &str {
        STUB_MODEL_ID
    }

    fn complete(&self, request: &GenerationRequest, attempt: u32, _feedback: Option<&str>) -> Result<Json, BackendError> {
        let mut rng = if attempt == 0 {
            request.seed_tag.stream()
        } else {
            request.seed_tag.child(&format!("attempt{attempt}")).stream()
        };
        let bad = |e: String| BackendError::Malformed(e);
        let out = match request.stage {
            Stage::Titles => to_json(&titles(&request.payload().map_err(bad)?, &mut rng)),
            Stage::Description => to_json(&description(&request.payload().map_err(bad)?, &mut rng)),
            Stage::Abstract => to_json(&abstract_text(&request.payload().map_err(bad)?, &mut rng)),
            Stage::PathStep => to_json(&path_step(&request.payload().map_err(bad)?, &mut rng)),
            Stage::PathValues => to_json(&path_values(&request.payload().map_err(bad)?, &mut rng)),
            Stage::FileVariables => to_json(&file_variables(&request.payload().map_err(bad)?, &mut rng)),
            Stage::DistParams => to_json(&dist_params(&request.payload().map_err(bad)?, &mut rng)),
            Stage::DependentExpr => to_json(&dependent_expr(&request.payload().map_err(bad)?, &mut rng)),
            Stage::Paraphrase => to_json(&paraphrase(&request.payload().map_err(bad)?, &mut rng)),
        };
        Ok(out)
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Json {
    serde_json::to_value(v).expect("stub responses serialize")
}

fn pick<'a>(rng: &mut RandomStream, items: &[&'a str]) -> &'a str {
    items[rng.index(items.len())]
}

/// Distinct picks, in draw order.
fn pick_distinct<'a>(rng: &mut RandomStream, items: &[&'a str], n: usize) -> Vec<&'a str> {
    let mut pool: Vec<&str> = items.to_vec();
    rng.shuffle(&mut pool);
    pool.truncate(n.min(items.len()));
    pool
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

const TITLE_VERBS: &[&str] = &[
    "Quantifying",
    "Characterizing",
    "Modeling",
    "Probing",
    "Mapping",
    "Benchmarking",
    "Assessing",
    "Disentangling",
    "Measuring",
    "Explaining",
];
const TITLE_OBJECTS: &[&str] = &[
    "sensitivity",
    "variability",
    "response dynamics",
    "robustness",
    "scaling behavior",
    "trade-offs",
    "drift",
    "threshold effects",
    "interaction effects",
    "recovery kinetics",
];
const TITLE_CONDITIONS: &[&str] = &[
    "controlled perturbations",
    "varying operating conditions",
    "repeated trials",
    "resource constraints",
    "environmental stress",
    "staged interventions",
    "shifting baselines",
    "graded exposure",
];

fn titles(p: &TitlesPayload, rng: &mut RandomStream) -> TitlesResponse {
    let mut titles: Vec<String> = Vec::with_capacity(p.k);
    while titles.len() < p.k {
        let t = format!(
            "{} {} in {} under {}",
            pick(rng, TITLE_VERBS),
            pick(rng, TITLE_OBJECTS),
            p.context.subdomain,
            pick(rng, TITLE_CONDITIONS)
        );
        if !titles.contains(&t) {
            titles.push(t);
        }
    }
    TitlesResponse { titles }
}

const INDEPENDENT_BANK: &[(&str, &str)] = &[
    ("temp", "incubation temperature"),
    ("dose", "administered dose level"),
    ("ph", "acidity of the medium"),
    ("load", "applied load"),
    ("lr", "learning rate"),
    ("batch", "batch size setting"),
    ("noise", "injected noise level"),
    ("pressure", "chamber pressure"),
    ("humidity", "relative humidity"),
    ("freq", "excitation frequency"),
    ("voltage", "supply voltage"),
    ("conc", "substrate concentration"),
    ("speed", "operating speed"),
    ("duration", "exposure duration"),
    ("intensity", "stimulus intensity"),
    ("site", "sampling site"),
    ("method", "processing method"),
    ("material", "material grade"),
    ("strain", "strain or variant used"),
    ("treatment", "treatment arm"),
];
const DEPENDENT_BANK: &[(&str, &str)] = &[
    ("yield", "measured yield"),
    ("accuracy", "task accuracy"),
    ("latency", "response latency"),
    ("growth_rate", "growth rate"),
    ("efficiency", "conversion efficiency"),
    ("error_rate", "observed error rate"),
    ("response", "primary response signal"),
    ("throughput", "throughput"),
    ("stability", "stability score"),
    ("loss", "residual loss"),
    ("output", "output power"),
    ("recovery", "recovery fraction"),
];
const CONFOUNDER_BANK: &[(&str, &str)] = &[
    ("ambient_temp", "ambient temperature during runs"),
    ("operator", "person running the trial"),
    ("instrument_drift", "slow calibration drift"),
    ("batch_effects", "differences between material batches"),
    ("time_of_day", "time at which measurements were taken"),
    ("sample_age", "age of the sample at measurement"),
];

fn named(rng: &mut RandomStream, bank: &[(&str, &str)], n: usize) -> Vec<NamedDescription> {
    let mut idx: Vec<usize> = (0..bank.len()).collect();
    rng.shuffle(&mut idx);
    idx.into_iter()
        .take(n)
        .map(|i| NamedDescription {
            name: bank[i].0.to_string(),
            description: bank[i].1.to_string(),
        })
        .collect()
}

fn description(p: &DescriptionPayload, rng: &mut RandomStream) -> DescriptionResponse {
    let n_ind = 2 + rng.index(3);
    let n_dep = 1 + rng.index(2);
    let n_conf = 1 + rng.index(2);
    let independent_vars = named(rng, INDEPENDENT_BANK, n_ind);
    let dependent_vars = named(rng, DEPENDENT_BANK, n_dep);
    let confounders = named(rng, CONFOUNDER_BANK, n_conf);
    let hypothesis = format!(
        "Changes in {} and {} systematically shift the {} observed in {} experiments.",
        independent_vars[0].description,
        independent_vars[1].description,
        dependent_vars[0].description,
        lower_first(&p.context.subdomain)
    );
    let setup_text = format!(
        "Runs are organized by condition and replicate. Each run records {} alongside the controlled settings; {} is logged but not controlled.",
        dependent_vars
            .iter()
            .map(|d| d.description.as_str())
            .collect::<Vec<_>>()
            .join(" and "),
        confounders[0].description
    );
    DescriptionResponse {
        hypothesis,
        independent_vars,
        dependent_vars,
        confounders,
        setup_text,
    }
}

fn abstract_text(p: &AbstractPayload, rng: &mut RandomStream) -> AbstractResponse {
    let opener = pick(
        rng,
        &[
            "We study",
            "This project examines",
            "We investigate",
            "This work characterizes",
        ],
    );
    let d = &p.description;
    let text = format!(
        "{opener} how {} and {} affect {} within {} ({}). {} We vary the controlled settings across a grid of conditions and record repeated measurements for each. {}",
        d.independent_vars[0].description,
        d.independent_vars[1].description,
        d.dependent_vars[0].description,
        lower_first(&p.context.subdomain),
        p.context.domain,
        d.hypothesis,
        d.setup_text
    );
    AbstractResponse { abstract_text: text }
}

const GENERIC_PLACEHOLDERS: &[&str] = &[
    "cond", "phase", "grp", "arch", "mode", "cfg", "trt", "lvl", "ltype", "tau", "rounds", "encr", "ncl", "tpt",
];

fn path_step(p: &PathStepPayload, rng: &mut RandomStream) -> PathStepResponse {
    let used = |name: &str| p.chosen.iter().any(|c| c.name == name);
    let has_kind = |k: PlaceholderKind| p.chosen.iter().any(|c| c.kind == k);
    let step = p.chosen.len();
    let u = rng.next_f64();
    // Special placeholders are never first, and each appears at most once.
    let kind = if step == 0 {
        PlaceholderKind::Independent
    } else if u < 0.22 && !has_kind(PlaceholderKind::Date) {
        PlaceholderKind::Date
    } else if u < 0.44 && !has_kind(PlaceholderKind::Sequence) {
        PlaceholderKind::Sequence
    } else if u < 0.52 && !has_kind(PlaceholderKind::Researcher) {
        PlaceholderKind::Researcher
    } else {
        PlaceholderKind::Independent
    };
    let (name, description, label) = match kind {
        PlaceholderKind::Date => ("date".to_string(), "date the run was performed".to_string(), String::new()),
        PlaceholderKind::Sequence => (
            "seq_number".to_string(),
            "replicate number within a condition".to_string(),
            String::new(),
        ),
        PlaceholderKind::Researcher => (
            "researcher".to_string(),
            "person who recorded the run".to_string(),
            String::new(),
        ),
        PlaceholderKind::Independent => {
            let from_project: Vec<&NamedDescription> = p
                .project
                .independent_vars
                .iter()
                .filter(|v| !used(&v.name))
                .collect();
            let (name, desc) = if !from_project.is_empty() && rng.bernoulli(0.6) {
                let v = from_project[rng.index(from_project.len())];
                (v.name.clone(), v.description.clone())
            } else {
                let free: Vec<&str> = GENERIC_PLACEHOLDERS.iter().copied().filter(|n| !used(n)).collect();
                let n = free[rng.index(free.len())];
                (n.to_string(), format!("experimental condition `{n}`"))
            };
            let label = match rng.index(4) {
                0 => format!("{name}="),
                1 | 2 => format!("{name}_"),
                _ => name.clone(),
            };
            (name, desc, label)
        }
    };
    let connector = (step > 0).then(|| {
        let u = rng.next_f64();
        if u < 0.6 {
            Connector::Slash
        } else if u < 0.8 {
            Connector::Underscore
        } else {
            Connector::Dash
        }
    });
    PathStepResponse {
        placeholder: PlaceholderDraft {
            name,
            kind,
            label,
            description,
        },
        connector,
    }
}

const WORD_VALUE_SETS: &[&[&str]] = &[
    &["low", "med", "high", "vhigh"],
    &["bal", "skw", "mix"],
    &["mlp2", "cnn", "rnn", "tfm"],
    &["ctrl", "trt", "sham"],
    &["wt", "ko", "oe", "ps"],
    &["early", "mid", "late"],
    &["knockout", "overexpression", "promoter_swap"],
    &["north", "south", "east", "west"],
    &["bfv", "ckks", "paillier"],
    &["a", "b", "c", "d", "e"],
    &["periodic", "random", "burst"],
];
const NUMBER_VALUE_SETS: &[&[&str]] = &[
    &["0.01", "0.05", "0.1", "0.2", "0.5"],
    &["10", "20", "50", "100", "200"],
    &["0", "6", "12", "24", "48"],
    &["4.0", "5.0", "6.0", "7.0"],
    &["1", "2", "4", "8", "16", "32"],
    &["25", "30", "35", "40"],
];
const FIRST_NAMES: &[&str] = &["kai", "ana", "li", "omar", "sara", "jon", "mei", "ravi", "eva", "tom"];
const LAST_NAMES: &[&str] = &["monroe", "silva", "chen", "haddad", "berg", "okafor", "ito", "patel", "novak", "ruiz"];

fn path_values(p: &PathValuesPayload, rng: &mut RandomStream) -> PathValuesResponse {
    let n = 2 + rng.index(5);
    let values: Vec<String> = match p.placeholder.kind {
        PlaceholderKind::Date => {
            let start = chrono::NaiveDate::from_ymd_opt(2023, 1, 1).unwrap()
                + chrono::Duration::days(rng.index(3 * 365) as i64);
            let step = 1 + rng.index(30) as i64;
            (0..n)
                .map(|i| (start + chrono::Duration::days(i as i64 * step)).format("%Y-%m-%d").to_string())
                .collect()
        }
        PlaceholderKind::Sequence => (1..=n).map(|i| i.to_string()).collect(),
        PlaceholderKind::Researcher => {
            let mut out: Vec<String> = Vec::new();
            while out.len() < n {
                let v = format!("{}.{}", pick(rng, FIRST_NAMES), pick(rng, LAST_NAMES));
                if !out.contains(&v) {
                    out.push(v);
                }
            }
            out
        }
        PlaceholderKind::Independent => {
            let set = if rng.bernoulli(0.5) {
                NUMBER_VALUE_SETS[rng.index(NUMBER_VALUE_SETS.len())]
            } else {
                WORD_VALUE_SETS[rng.index(WORD_VALUE_SETS.len())]
            };
            let k = n.min(set.len());
            let start = rng.index(set.len() - k + 1);
            set[start..start + k].iter().map(|s| s.to_string()).collect()
        }
    };
    PathValuesResponse { values }
}

const CATEGORICAL_FILE_VARS: &[(&str, &str)] = &[
    ("agg_weighting", "aggregation weighting scheme"),
    ("err_clust_freq", "how clustered errors are"),
    ("ret_acc", "retention accuracy band"),
    ("stab", "stability flag"),
    ("small_sz_flag", "whether any small item was present"),
    ("operator_shift", "shift of the operator"),
    ("substrate", "substrate type"),
    ("sensor", "sensor model"),
    ("quality", "quality grade"),
    ("outcome_class", "outcome class"),
];
const NUMERIC_FILE_VARS: &[(&str, &str)] = &[
    ("joint_temp", "joint temperature"),
    ("hum_amb", "ambient humidity fraction"),
    ("mean_latency", "mean latency in ms"),
    ("test_var", "test variance"),
    ("biomass", "biomass concentration"),
    ("flow_rate", "flow rate"),
    ("count_events", "number of events"),
    ("retries", "number of retries"),
];

fn file_variables(p: &FileVariablesPayload, rng: &mut RandomStream) -> FileVariablesResponse {
    let taken: Vec<&str> = p.path_variables.iter().map(|v| v.name.as_str()).collect();
    let mut vars = Vec::new();
    let push = |vars: &mut Vec<FileVariableDraft>, name: &str, role, kind, description: &str| {
        if !taken.contains(&name) && !vars.iter().any(|v: &FileVariableDraft| v.name == name) {
            vars.push(FileVariableDraft {
                name: name.to_string(),
                role,
                kind,
                description: description.to_string(),
            });
        }
    };
    if rng.bernoulli(0.5) {
        push(&mut vars, "sample_id", VariableRole::Identifier, VariableKind::Categorical, "sample identifier");
    }
    if rng.bernoulli(0.4) {
        push(&mut vars, "measured_on", VariableRole::Datetime, VariableKind::Categorical, "measurement date");
    }
    let n_cat = 2 + rng.index(2);
    let cat_names: Vec<&str> = CATEGORICAL_FILE_VARS.iter().map(|v| v.0).collect();
    for name in pick_distinct(rng, &cat_names, n_cat) {
        let desc = CATEGORICAL_FILE_VARS.iter().find(|v| v.0 == name).unwrap().1;
        push(&mut vars, name, VariableRole::Independent, VariableKind::Categorical, desc);
    }
    let n_num = 1 + rng.index(2);
    let num_names: Vec<&str> = NUMERIC_FILE_VARS.iter().map(|v| v.0).collect();
    for name in pick_distinct(rng, &num_names, n_num) {
        let desc = NUMERIC_FILE_VARS.iter().find(|v| v.0 == name).unwrap().1;
        let kind = if name.starts_with("count") || name == "retries" || rng.bernoulli(0.2) {
            VariableKind::DiscreteInteger
        } else {
            VariableKind::Continuous
        };
        push(&mut vars, name, VariableRole::Independent, kind, desc);
    }
    let mut deps: Vec<(String, String)> = p
        .project
        .dependent_vars
        .iter()
        .map(|d| (d.name.clone(), d.description.clone()))
        .collect();
    if rng.bernoulli(0.5) {
        let extra = DEPENDENT_BANK[rng.index(DEPENDENT_BANK.len())];
        deps.push((extra.0.to_string(), extra.1.to_string()));
    }
    for (name, desc) in deps.iter().take(3) {
        push(&mut vars, name, VariableRole::Dependent, VariableKind::Continuous, desc);
    }
    if !vars.iter().any(|v| v.role == VariableRole::Dependent) {
        push(&mut vars, "response_score", VariableRole::Dependent, VariableKind::Continuous, "response score");
    }
    FileVariablesResponse { variables: vars }
}

fn r3(x: f64) -> f64 {
    round_sig(x, 3)
}

fn dist_params(p: &DistParamsPayload, rng: &mut RandomStream) -> DistParamsResponse {
    let dist = match p.variable.kind {
        VariableKind::Categorical => {
            let set: &[&str] = if rng.bernoulli(0.3) {
                NUMBER_VALUE_SETS[rng.index(NUMBER_VALUE_SETS.len())]
            } else {
                WORD_VALUE_SETS[rng.index(WORD_VALUE_SETS.len())]
            };
            let n = 2 + rng.index(set.len().min(5) - 1);
            let values: Vec<String> = set[..n].iter().map(|s| s.to_string()).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.uniform(0.5, 1.5)).collect();
            let total: f64 = weights.iter().sum();
            let mut probs: Vec<f64> = weights.iter().map(|w| (w / total * 1000.0).round() / 1000.0).collect();
            let head: f64 = probs[..n - 1].iter().sum();
            probs[n - 1] = ((1.0 - head) * 1000.0).round() / 1000.0;
            DistributionSpec::Categorical { values, probs }
        }
        VariableKind::DiscreteInteger => match rng.index(5) {
            0 => DistributionSpec::Bernoulli {
                p: r3(rng.uniform(0.2, 0.8)),
            },
            1 => DistributionSpec::Binomial {
                n: 5 + rng.index(16) as u32,
                p: r3(rng.uniform(0.2, 0.8)),
            },
            2 => DistributionSpec::Geometric {
                p: r3(rng.uniform(0.2, 0.6)),
            },
            3 => DistributionSpec::NegativeBinomial {
                r: 2 + rng.index(4) as u32,
                p: r3(rng.uniform(0.3, 0.7)),
            },
            _ => DistributionSpec::Poisson {
                lambda: r3(rng.uniform(1.0, 20.0)),
            },
        },
        VariableKind::Continuous => match rng.index(4) {
            0 => {
                let mu = r3(rng.uniform(1.0, 100.0));
                DistributionSpec::Normal {
                    mu,
                    sigma: r3(mu * rng.uniform(0.05, 0.3)),
                }
            }
            1 => {
                let a = r3(rng.uniform(0.0, 50.0));
                DistributionSpec::Uniform {
                    a,
                    b: r3(a + rng.uniform(1.0, 50.0)),
                }
            }
            2 => DistributionSpec::Exponential {
                lambda: r3(rng.uniform(0.1, 2.0)),
            },
            _ => DistributionSpec::Beta {
                alpha: r3(rng.uniform(1.0, 5.0)),
                beta: r3(rng.uniform(1.0, 5.0)),
            },
        },
    };
    DistParamsResponse { dist }
}

fn lit(x: f64) -> String {
    format_real(round_sig(x, 3))
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// `lookup(name, {...}, 1.0)` with factors around 1.
fn factor_lookup(rng: &mut RandomStream, input: &ExprInput) -> String {
    let values = input.values.as_deref().unwrap_or_default();
    let entries: Vec<String> = values
        .iter()
        .map(|v| format!("{}: {}", quote(v), lit(rng.uniform(0.5, 1.5))))
        .collect();
    format!("lookup({}, {{{}}}, 1.0)", input.name, entries.join(", "))
}

/// A numeric input scaled to be of order one.
fn scaled(input: &ExprInput) -> String {
    let m = input.mean.map(f64::abs).filter(|m| *m > 1e-6).unwrap_or(1.0);
    if (m - 1.0).abs() < 1e-12 {
        input.name.clone()
    } else {
        format!("({} / {})", input.name, lit(m))
    }
}

fn dependent_expr(p: &DependentExprPayload, rng: &mut RandomStream) -> DependentExprResponse {
    let numeric: Vec<&ExprInput> = p
        .inputs
        .iter()
        .filter(|i| i.ty == VarType::Num && i.mean.is_some())
        .collect();
    let categorical: Vec<&ExprInput> = p
        .inputs
        .iter()
        .filter(|i| i.ty == VarType::Str && i.values.as_ref().is_some_and(|v| !v.is_empty()))
        .collect();
    // Path values such as "35" or "0.05" can enter numerically.
    let numeric_text: Vec<&ExprInput> = categorical
        .iter()
        .copied()
        .filter(|i| {
            let vals = i.values.as_deref().unwrap_or_default();
            vals.len() >= 2 && vals.iter().all(|v| v.parse::<f64>().is_ok())
        })
        .collect();

    let base = lit(rng.uniform(1.0, 100.0));
    let c1 = lit(rng.uniform(0.1, 0.9));
    let c2 = lit(rng.uniform(0.05, 0.5));
    let factor = if categorical.is_empty() {
        "1.0".to_string()
    } else {
        let a = categorical[rng.index(categorical.len())];
        factor_lookup(rng, a)
    };
    let x = if numeric.is_empty() {
        "1.0".to_string()
    } else {
        scaled(numeric[rng.index(numeric.len())])
    };
    let path_term = if numeric_text.is_empty() {
        None
    } else {
        let v = numeric_text[rng.index(numeric_text.len())];
        let nums: Vec<f64> = v
            .values
            .as_deref()
            .unwrap_or_default()
            .iter()
            .filter_map(|s| s.parse().ok())
            .collect();
        let mean = nums.iter().sum::<f64>() / nums.len() as f64;
        let span = nums.iter().cloned().fold(f64::MIN, f64::max) - nums.iter().cloned().fold(f64::MAX, f64::min);
        let span = if span > 0.0 { span } else { 1.0 };
        Some(format!(
            "(1 + {} * (parse_number({}) - {}) / {})",
            lit(rng.uniform(0.1, 0.4)),
            v.name,
            lit(mean),
            lit(span)
        ))
    };
    let path_factor = path_term.map(|t| format!(" * {t}")).unwrap_or_default();
    let expr = match rng.index(5) {
        0 => format!("{base} * {factor}{path_factor} * (1 + {c1} * {x}) * (1 + error)"),
        1 => format!("{base} * exp(-{c2} * pow({x} - 1, 2)) * {factor}{path_factor} + {} * error", lit(rng.uniform(0.5, 5.0))),
        2 => format!("{base} + {c1} * {base} * log(max(1e-9, {x})) * {factor}{path_factor} + error"),
        3 => {
            let hi = lit(2.0 * rng.uniform(1.0, 100.0) + 50.0);
            format!("clamp({base} * {factor}{path_factor} * (1 + {c1} * {x}) + error, 0.0, {hi})")
        }
        _ => format!(
            "if {x} > 1 then {base} * {factor}{path_factor} + error else {} * {factor} * (1 + {c2} * {x}) + error",
            lit(rng.uniform(1.0, 100.0))
        ),
    };
    DependentExprResponse { expr }
}

const PARAPHRASE_OPENERS: &[&str] = &[
    "Based on the recorded data, ",
    "Looking at the experimental records, ",
    "For this study, ",
    "Using the repository's data, ",
];

fn paraphrase(p: &ParaphrasePayload, rng: &mut RandomStream) -> ParaphraseResponse {
    let mut text = p.question.clone();
    let swaps: &[(&str, &[&str])] = &[
        (
            "only considering rows where",
            &["restricting attention to rows in which", "looking only at rows where"],
        ),
        (
            "Only considering files where",
            &["Restricting attention to files in which", "Looking only at files where"],
        ),
        ("what is the", &["what is the value of the", "can you report the"]),
        ("In the file", &["In the data file", "Within the file"]),
        (" variable", &[" measurement", " column"]),
    ];
    for (from, choices) in swaps {
        if text.contains(from) {
            let to = choices[rng.index(choices.len())];
            text = text.replacen(from, to, 1);
        }
    }
    let opener = pick(rng, PARAPHRASE_OPENERS);
    let text = format!("{opener}{}", lower_first(&text));
    ParaphraseResponse { paraphrase: text }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seedstream::SeedContext;

    #[test]
    fn path_values_bounds() {
        let project = sample_project();
        for seed in 0..200u64 {
            for kind in [
                PlaceholderKind::Independent,
                PlaceholderKind::Date,
                PlaceholderKind::Sequence,
                PlaceholderKind::Researcher,
            ] {
                let payload = PathValuesPayload {
                    project: project.clone(),
                    placeholder: PlaceholderDraft {
                        name: "x".into(),
                        kind,
                        label: String::new(),
                        description: "d".into(),
                    },
                };
                let req = GenerationRequest::new(Stage::PathValues, &payload, SeedContext::new(seed, "pv"));
                let out = StubBackend.complete(&req, 0, None).unwrap();
                validate(&req, &out).unwrap();
                let n = out["values"].as_array().unwrap().len();
                assert!((2..=6).contains(&n), "{n}");
            }
        }
    }

    #[test]
    fn paraphrase_keeps_path_token() {
        let payload = ParaphrasePayload {
            project: sample_project(),
            question: "In the file \"{path}\", what is the mean value of the \"x\" variable?".into(),
        };
        for seed in 0..50 {
            let req = GenerationRequest::new(Stage::Paraphrase, &payload, SeedContext::new(seed, "p"));
            let out = StubBackend.complete(&req, 0, None).unwrap();
            assert!(out["paraphrase"].as_str().unwrap().contains(PATH_TOKEN));
        }
    }

    #[test]
    fn equal_seed_tags_equal_responses() {
        let payload = TitlesPayload {
            context: crate::taxonomy::ScientificContext {
                field: "F".into(),
                domain: "D".into(),
                subdomain: "S".into(),
            },
            k: 4,
        };
        let req = GenerationRequest::new(Stage::Titles, &payload, SeedContext::new(3, "t"));
        assert_eq!(
            StubBackend.complete(&req, 0, None).unwrap(),
            StubBackend.complete(&req, 0, None).unwrap()
        );
    }

    fn sample_project() -> crate::repospec::types::ProjectSpec {
        crate::repospec::types::ProjectSpec {
            title: "T".into(),
            hypothesis: "H".into(),
            independent_vars: vec![NamedDescription {
                name: "temp".into(),
                description: "temperature".into(),
            }],
            dependent_vars: vec![NamedDescription {
                name: "yield".into(),
                description: "yield".into(),
            }],
            confounders: vec![NamedDescription {
                name: "c".into(),
                description: "c".into(),
            }],
            setup_text: "S".into(),
            abstract_text: "A".into(),
        }
    }
}
