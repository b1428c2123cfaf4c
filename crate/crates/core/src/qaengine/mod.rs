//! Question generation with exact ground truth computed from the generating
//! program rather than from the rendered files.

mod generate;
pub mod stats;
mod truth;
mod types;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_question, generate_steered, steerable, Steer};
pub use truth::{
    certify_unanswerable, check_certificate, compute_ground_truth, minimum_rows, operation_defined, TableCache,
};
pub use types::*;

use crate::genmodel::schema::{ParaphrasePayload, ParaphraseResponse, PATH_TOKEN};
use crate::genmodel::{GenError, GenerationParams, GenerationRequest, Generator, Stage};
use crate::repospec::Repository;
use crate::seedstream::{derive_stage_seed, RandomStream, SeedContext};

#[derive(Debug, Error)]
pub enum QaError {
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
    #[error("materialization failed: {0}")]
    Materialize(String),
    #[error("certification failed: {0}")]
    CertificationFailure(String),
    #[error("paraphrase broke its contract: {0}")]
    ParaphraseContract(String),
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad batch line {line}: {message}")]
    BadBatch { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    /// Items per repository for each repeatable question type.
    pub per_repo: usize,
    /// Items kept after sampling the plan; 0 keeps everything.
    pub sample_size: usize,
    /// Intended fraction of answerable items.
    pub target_answerable: f64,
    /// Extra attempts per item when steering misses.
    pub max_retries: usize,
    /// Seed for the plan sample.
    pub sample_seed: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            per_repo: 5,
            sample_size: 500,
            target_answerable: 0.72,
            max_retries: 20,
            sample_seed: 0,
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.target_answerable) {
            return Err(format!("target_answerable must be in [0, 1], got {}", self.target_answerable));
        }
        if self.per_repo == 0 {
            return Err("per_repo must be positive".into());
        }
        Ok(())
    }
}

/// One planned item: repository position, type and repetition index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedItem {
    pub repo: usize,
    pub qtype: QType,
    pub k: usize,
}

/// Every item a full run would ask, in repository then type order, before
/// sampling.
pub fn plan_items(repo_count: usize, per_repo: usize) -> Vec<PlannedItem> {
    let mut out = Vec::new();
    for repo in 0..repo_count {
        for qtype in QType::ALL {
            let n = if qtype.once_per_repo() { 1 } else { per_repo };
            out.extend((0..n).map(|k| PlannedItem { repo, qtype, k }));
        }
    }
    out
}

/// Seeded subset of `plan` of size `n`, kept in plan order.
pub fn sample_plan(plan: Vec<PlannedItem>, n: usize, seed: u64) -> Vec<PlannedItem> {
    if n == 0 || plan.len() <= n {
        return plan;
    }
    let mut idx: Vec<usize> = (0..plan.len()).collect();
    RandomStream::new(derive_stage_seed(seed, "qa-sample")).shuffle(&mut idx);
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| plan[i]).collect()
}

/// Spread `quota` unanswerable slots evenly over `slots` steerable items.
pub fn spread_quota(slots: usize, quota: usize) -> Vec<bool> {
    let quota = quota.min(slots);
    (0..slots).map(|j| (j + 1) * quota / slots > j * quota / slots).collect()
}

/// Steering direction for every planned item.
pub fn steering(plan: &[PlannedItem], repos: &[Repository], target_answerable: f64) -> Vec<Steer> {
    let fixed = plan
        .iter()
        .filter(|p| matches!(p.qtype, QType::Title | QType::Abstract) && !repos[p.repo].spec().readme_present)
        .count();
    let wanted = ((1.0 - target_answerable) * plan.len() as f64).round() as usize;
    let quota = wanted.saturating_sub(fixed);
    let slots: Vec<usize> = (0..plan.len()).filter(|&i| steerable(plan[i].qtype)).collect();
    let marks = spread_quota(slots.len(), quota);
    let mut out = vec![Steer::Any; plan.len()];
    for (&i, &unanswerable) in slots.iter().zip(&marks) {
        out[i] = if unanswerable {
            Steer::Unanswerable
        } else {
            Steer::Answerable
        };
    }
    out
}

fn question_seed(repo: &Repository, p: &PlannedItem, attempt: usize) -> SeedContext {
    let ctx = SeedContext::new(repo.spec().master_seed, format!("question/{}/{}", p.qtype, p.k));
    if attempt == 0 {
        ctx
    } else {
        ctx.child(&format!("retry{attempt}"))
    }
}

/// Generate one planned item, retrying with fresh streams until steering
/// lands or attempts run out. Truth is always recorded as computed.
pub fn generate_planned(cache: &TableCache<'_>, p: &PlannedItem, steer: Steer, max_retries: usize) -> Result<QAItem, QaError> {
    let mut attempt = 0;
    loop {
        let item = generate_steered(cache, p.qtype, &question_seed(cache.repo(), p, attempt), steer)?;
        let landed = match steer {
            Steer::Any => true,
            Steer::Answerable => item.ground_truth.is_answerable(),
            Steer::Unanswerable => !item.ground_truth.is_answerable(),
        };
        if landed || attempt >= max_retries {
            return Ok(item);
        }
        attempt += 1;
    }
}

/// Plan, sample, steer and generate a question batch over `repos`.
pub fn generate_batch(repos: &[Repository], cfg: &BatchConfig) -> Result<Vec<QAItem>, QaError> {
    cfg.validate().map_err(QaError::Inconsistent)?;
    let plan = sample_plan(plan_items(repos.len(), cfg.per_repo), cfg.sample_size, cfg.sample_seed);
    let steers = steering(&plan, repos, cfg.target_answerable);
    let caches: Vec<TableCache<'_>> = repos.iter().map(TableCache::new).collect();
    plan.par_iter()
        .zip(steers.par_iter())
        .map(|(p, s)| generate_planned(&caches[p.repo], p, *s, cfg.max_retries))
        .collect()
}

/// Literal path or prefix quoted in an item's text, if any.
pub fn literal_path(item: &QAItem) -> Option<&str> {
    match &item.target {
        Target::RowCount { path } => Some(path),
        Target::Univariate { path: Some(p), .. } => Some(p),
        Target::FileCount { prefix: Some(p) } => Some(p),
        _ => None,
    }
}

/// Ask `generator` for one paraphrase of the item's template. The literal
/// path is masked during generation and restored afterwards.
pub fn paraphrase_item(item: &mut QAItem, repo: &Repository, generator: &Generator) -> Result<(), QaError> {
    let literal = literal_path(item).map(str::to_string);
    let masked = match &literal {
        Some(p) => {
            if !item.template_text.contains(p.as_str()) {
                return Err(QaError::Inconsistent(format!("{}: template lacks its path", item.id)));
            }
            item.template_text.replacen(p.as_str(), PATH_TOKEN, 1)
        }
        None => item.template_text.clone(),
    };
    let payload = ParaphrasePayload {
        project: repo.spec().project.clone(),
        question: masked,
    };
    let seed = SeedContext::new(item.repo_seed, format!("paraphrase/{}", item.id));
    let request = GenerationRequest::new(Stage::Paraphrase, &payload, seed);
    let params = GenerationParams {
        k: 2,
        n_path: 1,
        model_id: String::new(),
    };
    let r: ParaphraseResponse = generator.generate_typed(&request, &params)?;
    let text = match &literal {
        Some(p) => {
            if r.paraphrase.matches(PATH_TOKEN).count() != 1 {
                return Err(QaError::ParaphraseContract(format!("{}: path token not kept once", item.id)));
            }
            r.paraphrase.replace(PATH_TOKEN, p)
        }
        None => {
            if r.paraphrase.contains(PATH_TOKEN) {
                return Err(QaError::ParaphraseContract(format!("{}: unexpected path token", item.id)));
            }
            r.paraphrase
        }
    };
    item.paraphrases.push(Paraphrase {
        model_id: generator.model_id().to_string(),
        text,
    });
    Ok(())
}

/// Paraphrase every item with each generator in turn.
pub fn paraphrase_batch(items: &mut [QAItem], repos: &[Repository], generators: &[Generator]) -> Result<(), QaError> {
    let by_seed: HashMap<u64, &Repository> = repos.iter().map(|r| (r.spec().master_seed, r)).collect();
    items.par_iter_mut().try_for_each(|item| {
        let repo = by_seed
            .get(&item.repo_seed)
            .ok_or_else(|| QaError::Inconsistent(format!("{}: repository {} not loaded", item.id, item.repo_seed)))?;
        generators.iter().try_for_each(|g| paraphrase_item(item, repo, g))
    })
}

pub fn write_batch<W: Write>(items: &[QAItem], mut out: W) -> Result<(), QaError> {
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| QaError::Inconsistent(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_batch<R: BufRead>(input: R) -> Result<Vec<QAItem>, QaError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem = serde_json::from_str(&line).map_err(|e| QaError::BadBatch {
            line: n + 1,
            message: e.to_string(),
        })?;
        if item.schema != QA_SCHEMA {
            return Err(QaError::BadBatch {
                line: n + 1,
                message: format!("schema {:?}, expected {QA_SCHEMA:?}", item.schema),
            });
        }
        out.push(item);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quota_spreads_evenly() {
        let m = spread_quota(10, 3);
        assert_eq!(m.iter().filter(|b| **b).count(), 3);
        assert_eq!(spread_quota(4, 9), vec![true; 4]);
        assert_eq!(spread_quota(5, 0), vec![false; 5]);
    }

    #[test]
    fn plan_counts() {
        let plan = plan_items(2, 5);
        assert_eq!(plan.len(), 2 * (4 + 7 * 5));
        let s = sample_plan(plan.clone(), 10, 1);
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| (w[0].repo, w[0].qtype, w[0].k) < (w[1].repo, w[1].qtype, w[1].k)));
        assert_eq!(s, sample_plan(plan, 10, 1));
    }
}
