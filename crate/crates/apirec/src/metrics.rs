//! Learning-to-rank evaluation: Precision@N, Recall@N, NDCG@N, AP@N/MAP@N.
//!
//! All metrics treat relevance as binary: an item in the ranked list is a hit
//! iff it belongs to the judgment's `real` set. Scores are averaged over
//! queries by [`evaluate`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the ideal DCG denominator is bounded.
///
/// `Capped` sums the ideal gain over `min(|real|, N)` positions, so a perfect
/// ranking scores 1.0 and NDCG@1 coincides with Precision@1. `Verbatim` sums
/// over all `|real|` positions regardless of N, which deflates short cutoffs
/// when a query has more relevant items than N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum IdcgMode {
    #[default]
    Capped,
    Verbatim,
}

/// One query's ranked output together with its ground-truth item set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryJudgment {
    ranked: Vec<usize>,
    real: BTreeSet<usize>,
}

impl QueryJudgment {
    /// Builds a judgment. `ranked` must be duplicate-free and `real` non-empty.
    pub fn new(ranked: Vec<usize>, real: BTreeSet<usize>) -> Result<Self> {
        if real.is_empty() {
            return Err(Error::Config("judgment has an empty relevant set".into()));
        }
        let mut seen = BTreeSet::new();
        for &id in &ranked {
            if !seen.insert(id) {
                return Err(Error::Config(format!(
                    "judgment ranking contains duplicate id {id}"
                )));
            }
        }
        Ok(Self { ranked, real })
    }

    pub fn ranked(&self) -> &[usize] {
        &self.ranked
    }

    pub fn real(&self) -> &BTreeSet<usize> {
        &self.real
    }

    /// Number of hits within the top `n` ranked items.
    fn hits_at(&self, n: usize) -> usize {
        self.ranked
            .iter()
            .take(n)
            .filter(|id| self.real.contains(id))
            .count()
    }

    /// Binary relevance of the item at 1-based rank `i`, 0 if absent.
    fn rel(&self, i: usize) -> f64 {
        match self.ranked.get(i - 1) {
            Some(id) if self.real.contains(id) => 1.0,
            _ => 0.0,
        }
    }
}

/// Fraction of the top-N slots filled with real hits. The denominator is N
/// even when fewer than N items were returned.
pub fn precision_at(j: &QueryJudgment, n: usize) -> f64 {
    assert!(n >= 1, "precision_at requires N >= 1");
    j.hits_at(n) as f64 / n as f64
}

/// Fraction of the real items recovered within the top N.
pub fn recall_at(j: &QueryJudgment, n: usize) -> f64 {
    assert!(n >= 1, "recall_at requires N >= 1");
    j.hits_at(n) as f64 / j.real.len() as f64
}

fn dcg_at(j: &QueryJudgment, n: usize) -> f64 {
    (1..=n).map(|i| j.rel(i) / ((i + 1) as f64).log2()).sum()
}

/// Normalized discounted cumulative gain at cutoff N.
pub fn ndcg_at(j: &QueryJudgment, n: usize, mode: IdcgMode) -> f64 {
    assert!(n >= 1, "ndcg_at requires N >= 1");
    let ideal_len = match mode {
        IdcgMode::Capped => j.real.len().min(n),
        IdcgMode::Verbatim => j.real.len(),
    };
    let idcg: f64 = (1..=ideal_len).map(|i| 1.0 / ((i + 1) as f64).log2()).sum();
    dcg_at(j, n) / idcg
}

/// Average precision at cutoff N: mean of Precision@i over hit positions i
/// within the top N, or 0.0 when nothing in the top N is a hit.
pub fn ap_at(j: &QueryJudgment, n: usize) -> f64 {
    assert!(n >= 1, "ap_at requires N >= 1");
    let mut hit_sum = 0.0;
    let mut hits = 0usize;
    for i in 1..=n {
        if j.rel(i) > 0.0 {
            hits += 1;
            hit_sum += hits as f64 / i as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        hit_sum / hits as f64
    }
}

/// Per-cutoff aggregate of the four metrics, averaged over queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtN {
    pub n: usize,
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    pub map: f64,
}

/// Evaluation report: one [`MetricsAtN`] row per requested cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_n: Vec<MetricsAtN>,
    pub query_count: usize,
}

impl MetricsReport {
    pub fn at(&self, n: usize) -> Option<&MetricsAtN> {
        self.per_n.iter().find(|row| row.n == n)
    }

    /// Renders the report as a tab-delimited table with a header row.
    pub fn to_tsv(&self, label: &str) -> String {
        let mut out = String::from("model\tn\tprec\trec\tndcg\tmap\n");
        for row in &self.per_n {
            out.push_str(&format!(
                "{label}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                row.n, row.precision, row.recall, row.ndcg, row.map
            ));
        }
        out
    }
}

/// Default cutoffs used by the evaluation tooling.
pub const DEFAULT_CUTOFFS: [usize; 3] = [1, 5, 10];

/// Averages each per-query metric over all judgments, per cutoff.
pub fn evaluate(judgments: &[QueryJudgment], ns: &[usize], mode: IdcgMode) -> Result<MetricsReport> {
    if judgments.is_empty() {
        return Err(Error::Config("cannot evaluate an empty judgment set".into()));
    }
    let count = judgments.len() as f64;
    let per_n = ns
        .iter()
        .map(|&n| {
            let mut acc = MetricsAtN {
                n,
                precision: 0.0,
                recall: 0.0,
                ndcg: 0.0,
                map: 0.0,
            };
            for j in judgments {
                acc.precision += precision_at(j, n);
                acc.recall += recall_at(j, n);
                acc.ndcg += ndcg_at(j, n, mode);
                acc.map += ap_at(j, n);
            }
            acc.precision /= count;
            acc.recall /= count;
            acc.ndcg /= count;
            acc.map /= count;
            acc
        })
        .collect();
    Ok(MetricsReport {
        per_n,
        query_count: judgments.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn judgment(ranked: &[usize], real: &[usize]) -> QueryJudgment {
        QueryJudgment::new(ranked.to_vec(), real.iter().copied().collect()).unwrap()
    }

    #[test]
    fn precision_counts_hits_over_n() {
        let j = judgment(&[1, 2, 3, 4, 5], &[1, 4]);
        assert_abs_diff_eq!(precision_at(&j, 5), 0.4);
        let perfect = judgment(&[7], &[7]);
        assert_abs_diff_eq!(precision_at(&perfect, 1), 1.0);
        let disjoint = judgment(&[1, 2], &[9]);
        assert_abs_diff_eq!(precision_at(&disjoint, 2), 0.0);
    }

    #[test]
    fn precision_denominator_stays_n_for_short_rankings() {
        let j = judgment(&[1], &[1]);
        assert_abs_diff_eq!(precision_at(&j, 5), 0.2);
    }

    #[test]
    fn recall_counts_hits_over_real() {
        let j = judgment(&[1, 2, 3, 4, 5], &[1, 4]);
        assert_abs_diff_eq!(recall_at(&j, 5), 1.0);
        assert_abs_diff_eq!(recall_at(&j, 1), 0.5);
        let disjoint = judgment(&[1, 2], &[9]);
        assert_abs_diff_eq!(recall_at(&disjoint, 2), 0.0);
    }

    #[test]
    fn ndcg_matches_hand_derivation() {
        // rel pattern [1,0,1] with two relevant items in total:
        // DCG = 1/log2(2) + 1/log2(4) = 1.5
        // IDCG = 1/log2(2) + 1/log2(3)
        let j = judgment(&[10, 11, 12], &[10, 12]);
        let expected = 1.5 / (1.0 + 1.0 / 3f64.log2());
        assert_abs_diff_eq!(ndcg_at(&j, 3, IdcgMode::Capped), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(ndcg_at(&j, 3, IdcgMode::Capped), 0.9197207891481876, epsilon = 1e-9);
    }

    #[test]
    fn ndcg_perfect_ranking_is_one() {
        let j = judgment(&[1, 2, 3], &[1, 2, 3, 4]);
        assert_abs_diff_eq!(ndcg_at(&j, 3, IdcgMode::Capped), 1.0, epsilon = 1e-12);
        let j2 = judgment(&[5, 6], &[5, 6]);
        assert_abs_diff_eq!(ndcg_at(&j2, 2, IdcgMode::Capped), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ndcg_no_hits_is_zero() {
        let j = judgment(&[1, 2, 3], &[8]);
        assert_abs_diff_eq!(ndcg_at(&j, 3, IdcgMode::Capped), 0.0);
    }

    #[test]
    fn verbatim_idcg_uses_full_relevant_count() {
        // Perfect top-1 with three relevant items: capped scores 1.0, the
        // verbatim bound divides by the three-position ideal instead.
        let j = judgment(&[1], &[1, 2, 3]);
        assert_abs_diff_eq!(ndcg_at(&j, 1, IdcgMode::Capped), 1.0, epsilon = 1e-12);
        let ideal: f64 = (1..=3).map(|i| 1.0 / ((i + 1) as f64).log2()).sum();
        assert_abs_diff_eq!(ndcg_at(&j, 1, IdcgMode::Verbatim), 1.0 / ideal, epsilon = 1e-12);
    }

    #[test]
    fn ap_matches_hand_derivation() {
        // rel [1,0,1]: (1/1 + 2/3) / 2
        let j = judgment(&[10, 11, 12], &[10, 12]);
        assert_abs_diff_eq!(ap_at(&j, 3), (1.0 + 2.0 / 3.0) / 2.0, epsilon = 1e-12);
        let single = judgment(&[4], &[4]);
        assert_abs_diff_eq!(ap_at(&single, 1), 1.0);
        let miss = judgment(&[1, 2], &[9]);
        assert_abs_diff_eq!(ap_at(&miss, 2), 0.0);
    }

    #[test]
    fn evaluate_averages_per_query() {
        let a = judgment(&[1], &[1]);
        let b = judgment(&[2], &[3]);
        let report = evaluate(&[a.clone()], &[1], IdcgMode::Capped).unwrap();
        assert_abs_diff_eq!(report.at(1).unwrap().precision, 1.0);
        assert_abs_diff_eq!(report.at(1).unwrap().map, 1.0);

        let report = evaluate(&[a, b], &[1], IdcgMode::Capped).unwrap();
        assert_abs_diff_eq!(report.at(1).unwrap().precision, 0.5);
        assert_eq!(report.query_count, 2);
    }

    #[test]
    fn evaluate_rejects_empty_input() {
        assert!(evaluate(&[], &[1], IdcgMode::Capped).is_err());
    }

    #[test]
    fn judgment_rejects_bad_input() {
        assert!(QueryJudgment::new(vec![1, 1], [2].into_iter().collect()).is_err());
        assert!(QueryJudgment::new(vec![1], BTreeSet::new()).is_err());
    }

    #[test]
    fn n1_identity_holds() {
        let hit = judgment(&[3, 9], &[3, 5]);
        let miss = judgment(&[9, 3], &[3, 5]);
        for j in [hit, miss] {
            let p = precision_at(&j, 1);
            assert_eq!(p, ndcg_at(&j, 1, IdcgMode::Capped));
            assert_eq!(p, ap_at(&j, 1));
        }
    }
}
