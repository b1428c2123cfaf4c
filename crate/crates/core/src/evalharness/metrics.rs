use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::EpisodeRecord;

/// Aggregates over one group of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Items whose true answer is "not possible".
    pub unanswerable: usize,
    /// Episodes that answered "not possible".
    pub predicted_not_possible: usize,
    /// Share of abstentions that were right; `None` when there were none.
    pub unanswerable_precision: Option<f64>,
    /// Share of unanswerable items that drew an abstention; `None` when
    /// there were none.
    pub unanswerable_recall: Option<f64>,
    pub mean_tool_calls: f64,
    pub mean_total_tokens: f64,
    pub mean_wall_time_secs: f64,
}

impl Metrics {
    pub fn of<'a>(records: impl IntoIterator<Item = &'a EpisodeRecord>) -> Self {
        let (mut n, mut correct, mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize, 0usize);
        let (mut calls, mut tokens, mut wall) = (0usize, 0u64, 0f64);
        for r in records {
            n += 1;
            correct += r.correct() as usize;
            match (r.predicted_not_possible(), r.answerable) {
                (true, false) => tp += 1,
                (true, true) => fp += 1,
                (false, false) => fneg += 1,
                (false, true) => {}
            }
            calls += r.tool_call_count;
            tokens += r.token_counts.total;
            wall += r.wall_time_secs;
        }
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
        Self {
            n,
            correct,
            accuracy: ratio(correct, n).unwrap_or(0.0),
            unanswerable: tp + fneg,
            predicted_not_possible: tp + fp,
            unanswerable_precision: ratio(tp, tp + fp),
            unanswerable_recall: ratio(tp, tp + fneg),
            mean_tool_calls: mean(calls as f64),
            mean_total_tokens: mean(tokens as f64),
            mean_wall_time_secs: mean(wall),
        }
    }
}

/// Metrics for one variant, overall and broken down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub variant: String,
    pub overall: Metrics,
    pub by_category: BTreeMap<String, Metrics>,
    pub by_qtype: BTreeMap<String, Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub episodes: usize,
    pub slices: Vec<Slice>,
}

impl Report {
    pub fn slice(&self, variant: &str) -> Option<&Slice> {
        self.slices.iter().find(|s| s.variant == variant)
    }
}

fn group<'a, K: Ord>(records: &[&'a EpisodeRecord], key: impl Fn(&EpisodeRecord) -> K) -> BTreeMap<K, Vec<&'a EpisodeRecord>> {
    let mut out: BTreeMap<K, Vec<&EpisodeRecord>> = BTreeMap::new();
    for r in records {
        out.entry(key(r)).or_default().push(r);
    }
    out
}

pub fn compute_metrics(records: &[EpisodeRecord]) -> Report {
    let all: Vec<&EpisodeRecord> = records.iter().collect();
    let slices = group(&all, |r| r.variant.key())
        .into_iter()
        .map(|(variant, rs)| Slice {
            variant,
            overall: Metrics::of(rs.iter().copied()),
            by_category: group(&rs, |r| r.category.as_str())
                .into_iter()
                .map(|(k, v)| (k.to_string(), Metrics::of(v)))
                .collect(),
            by_qtype: group(&rs, |r| r.qtype.as_str())
                .into_iter()
                .map(|(k, v)| (k.to_string(), Metrics::of(v)))
                .collect(),
        })
        .collect();
    Report {
        episodes: records.len(),
        slices,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    /// `None` when expected disagreement is zero.
    pub alpha: Option<f64>,
    pub observed_disagreement: f64,
    pub expected_disagreement: f64,
    /// Pairable values: those in units with at least two values.
    pub n_values: usize,
    pub undefined: bool,
}

/// Krippendorff's alpha for nominal data. Each unit holds one optional code
/// per rater; units with fewer than two codes are skipped.
pub fn krippendorff_alpha(units: &[Vec<Option<u32>>]) -> AgreementResult {
    let mut coincidence: HashMap<(u32, u32), f64> = HashMap::new();
    let mut n_values = 0usize;
    for unit in units {
        let vals: Vec<u32> = unit.iter().flatten().copied().collect();
        let m = vals.len();
        if m < 2 {
            continue;
        }
        n_values += m;
        let w = 1.0 / (m - 1) as f64;
        for (i, a) in vals.iter().enumerate() {
            for (j, b) in vals.iter().enumerate() {
                if i != j {
                    *coincidence.entry((*a, *b)).or_default() += w;
                }
            }
        }
    }
    let n = n_values as f64;
    let mut marginals: BTreeMap<u32, f64> = BTreeMap::new();
    let mut off_diagonal = 0.0;
    for (&(c, k), &o) in &coincidence {
        *marginals.entry(c).or_default() += o;
        if c != k {
            off_diagonal += o;
        }
    }
    let d_o = if n > 0.0 { off_diagonal / n } else { 0.0 };
    let sum_sq: f64 = marginals.values().map(|v| v * v).sum();
    let d_e = if n > 1.0 { (n * n - sum_sq) / (n * (n - 1.0)) } else { 0.0 };
    let undefined = d_e <= 0.0;
    AgreementResult {
        alpha: (!undefined).then(|| 1.0 - d_o / d_e),
        observed_disagreement: d_o,
        expected_disagreement: d_e,
        n_values,
        undefined,
    }
}

/// Units of correctness codes (1 correct, 0 incorrect) for episodes of the
/// same question under two runs, e.g. two variants or two agents.
pub fn agreement_pairs(a: &[EpisodeRecord], b: &[EpisodeRecord]) -> Vec<Vec<Option<u32>>> {
    let mut index: BTreeMap<&str, [Option<u32>; 2]> = BTreeMap::new();
    for (side, rs) in [a, b].into_iter().enumerate() {
        for r in rs {
            index.entry(r.question_id.as_str()).or_default()[side] = Some(r.correct() as u32);
        }
    }
    index.into_values().map(|v| v.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_gives_eight_fifteenths() {
        let units: Vec<Vec<Option<u32>>> = [(1, 1), (1, 0), (0, 0), (0, 0)]
            .iter()
            .map(|&(a, b)| vec![Some(a), Some(b)])
            .collect();
        let r = krippendorff_alpha(&units);
        assert!((r.alpha.unwrap() - 8.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn no_variation_is_undefined() {
        let units = vec![vec![Some(1), Some(1)], vec![Some(1), None, Some(1)], vec![Some(0)]];
        let r = krippendorff_alpha(&units);
        assert!(r.undefined);
        assert_eq!(r.alpha, None);
        assert_eq!(r.n_values, 4);
    }
}
