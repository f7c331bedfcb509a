//! Evaluation: AUC and multi-run statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation summary. For a single run, `per_run_auc` holds one entry and
/// `auc == auc_mean`. `auc_std` is the population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub n_test: usize,
    pub n_anomalies: usize,
    pub per_run_auc: Vec<f64>,
    pub auc_mean: f64,
    pub auc_std: f64,
}

/// Probability that a uniformly random anomaly outscores a uniformly
/// random normal instance, ties counted half. Rank-based (Mann–Whitney
/// with average ranks), O(n log n).
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Param("labels must be 0 or 1".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "auc needs both classes, got {n_pos} anomalies and {n_neg} normals"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN"));

    // Sum of positive ranks, with tied scores sharing their average rank.
    // Ranks are integers or integer halves, so this sum is exact in f64.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let p = n_pos as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * n_neg as f64))
}

/// Mean and population standard deviation across repeated runs.
pub fn summarize_runs(aucs: &[f64]) -> Result<EvalReport> {
    if aucs.is_empty() {
        return Err(Error::Shape("no runs to summarize".into()));
    }
    let n = aucs.len() as f64;
    let mean = aucs.iter().sum::<f64>() / n;
    let var = aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    Ok(EvalReport {
        auc: mean,
        n_test: 0,
        n_anomalies: 0,
        per_run_auc: aucs.to_vec(),
        auc_mean: mean,
        auc_std: var.sqrt(),
    })
}

/// Brute-force pairwise AUC, O(n^2). Test oracle for the rank-based path.
#[doc(hidden)]
pub fn auc_pairwise_oracle(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("both classes required".into()));
    }
    let mut favorable = 0.0f64;
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            if scores[i] > scores[j] {
                favorable += 1.0;
            } else if scores[i] == scores[j] {
                favorable += 0.5;
            }
        }
    }
    Ok(favorable / (n_pos as f64 * n_neg as f64))
}
