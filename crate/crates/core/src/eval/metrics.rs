//! Ranking metrics with binary relevance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::split::ColdSplit;
use super::EvalError;

pub const DEFAULT_K: usize = 10;
pub const RECALL_KS: [usize; 3] = [50, 200, 1000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: u32,
    pub hit: f64,
    pub ndcg: f64,
    /// Aligned with `MetricReport::recall_ks`.
    pub recall: Vec<f64>,
    pub top1: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    pub recall_ks: Vec<usize>,
    pub users: usize,
    pub hit_rate: f64,
    pub ndcg: f64,
    pub recall: Vec<f64>,
    pub unique_top1: usize,
    pub per_user: Vec<UserMetrics>,
}

impl MetricReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall_ks.iter().position(|x| *x == k).map(|i| self.recall[i])
    }

    /// Per-user hit indicators in user order, for paired tests.
    pub fn hits(&self) -> Vec<f64> {
        self.per_user.iter().map(|u| u.hit).collect()
    }

    pub fn ndcgs(&self) -> Vec<f64> {
        self.per_user.iter().map(|u| u.ndcg).collect()
    }
}

fn discount(rank0: usize) -> f64 {
    1.0 / ((rank0 + 2) as f64).log2()
}

/// Metrics for one ranking against its relevant set.
pub fn user_metrics(
    user: u32,
    ranking: &[u32],
    relevant: &BTreeSet<u32>,
    k: usize,
    recall_ks: &[usize],
) -> UserMetrics {
    let top = &ranking[..k.min(ranking.len())];
    let dcg: f64 = top
        .iter()
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(r, _)| discount(r))
        .sum();
    let ideal: f64 = (0..relevant.len().min(k)).map(discount).sum();
    let hit = top.iter().any(|i| relevant.contains(i));
    let recall = recall_ks
        .iter()
        .map(|&rk| {
            if relevant.is_empty() {
                return 0.0;
            }
            let found = ranking[..rk.min(ranking.len())]
                .iter()
                .filter(|i| relevant.contains(i))
                .count();
            found as f64 / relevant.len() as f64
        })
        .collect();
    UserMetrics {
        user,
        hit: if hit { 1.0 } else { 0.0 },
        ndcg: if ideal > 0.0 { dcg / ideal } else { 0.0 },
        recall,
        top1: ranking.first().copied(),
    }
}

/// Aggregates per-user metrics over every user in `relevant`. Rankings must
/// reach `min(K, universe_len)` for every cutoff.
pub fn compute_metrics_for(
    rankings: &BTreeMap<u32, Vec<u32>>,
    relevant: &BTreeMap<u32, BTreeSet<u32>>,
    k: usize,
    recall_ks: &[usize],
    universe_len: usize,
) -> Result<MetricReport, EvalError> {
    let need = recall_ks
        .iter()
        .copied()
        .chain([k])
        .max()
        .unwrap_or(k)
        .min(universe_len);
    let mut per_user = Vec::with_capacity(relevant.len());
    for (&user, rel) in relevant {
        if rel.is_empty() {
            continue;
        }
        let ranking = rankings.get(&user).map(Vec::as_slice).unwrap_or(&[]);
        if ranking.len() < need {
            return Err(EvalError::LengthMismatch {
                user,
                expected: need,
                got: ranking.len(),
            });
        }
        per_user.push(user_metrics(user, ranking, rel, k, recall_ks));
    }
    let n = per_user.len().max(1) as f64;
    let mean = |f: &dyn Fn(&UserMetrics) -> f64| per_user.iter().map(f).sum::<f64>() / n;
    let recall = (0..recall_ks.len()).map(|i| mean(&|u| u.recall[i])).collect();
    let unique_top1 = per_user.iter().filter_map(|u| u.top1).collect::<BTreeSet<_>>().len();
    Ok(MetricReport {
        k,
        recall_ks: recall_ks.to_vec(),
        users: per_user.len(),
        hit_rate: mean(&|u| u.hit),
        ndcg: mean(&|u| u.ndcg),
        recall,
        unique_top1,
        per_user,
    })
}

pub fn compute_metrics(
    rankings: &BTreeMap<u32, Vec<u32>>,
    split: &ColdSplit,
    k: usize,
    recall_ks: &[usize],
) -> Result<MetricReport, EvalError> {
    compute_metrics_for(rankings, &split.relevant, k, recall_ks, split.universe.len())
}
