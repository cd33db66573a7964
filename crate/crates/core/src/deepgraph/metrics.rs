use serde::{Deserialize, Serialize};

use super::DeepGraphError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPredMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub average_precision: f64,
    /// Only reported by the supervised trainer.
    pub top3_accuracy: Option<f64>,
}

/// Mann-Whitney AUC with ties counted as one half.
pub fn roc_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += mean_rank * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Area under the precision-recall step curve, one step per distinct score.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let np = pos.len() as f64;
    let (mut tp, mut fp, mut prev_recall, mut ap) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        let recall = tp / np;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
        i = j;
    }
    ap
}

pub fn eval_link_prediction(
    scores_pos: &[f64],
    scores_neg: &[f64],
    threshold: f64,
) -> Result<LinkPredMetrics, DeepGraphError> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(DeepGraphError::EmptyInput);
    }
    let tp = scores_pos.iter().filter(|&&s| s >= threshold).count() as f64;
    let fp = scores_neg.iter().filter(|&&s| s >= threshold).count() as f64;
    let np = scores_pos.len() as f64;
    let nn = scores_neg.len() as f64;
    let tn = nn - fp;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = tp / np;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(LinkPredMetrics {
        accuracy: (tp + tn) / (np + nn),
        precision,
        recall,
        f1,
        roc_auc: roc_auc(scores_pos, scores_neg),
        average_precision: average_precision(scores_pos, scores_neg),
        top3_accuracy: None,
    })
}
