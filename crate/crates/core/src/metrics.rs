//! Classification and ranking metrics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::scalar::Scalar;

/// Decision threshold for the thresholded classification metrics.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn check_binary<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::DegenerateLabels);
    }
    Ok((pos, neg))
}

fn cmp<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Area under the ROC curve as the Mann–Whitney statistic (ties count ½),
/// computed from mid-ranks.
pub fn roc_auc<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64, MetricError> {
    let (pos, neg) = check_binary(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| cmp(scores[a], scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their average
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Average precision; tied scores form a single cut.
pub fn pr_auc<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64, MetricError> {
    let (pos, _) = check_binary(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| cmp(scores[b], scores[a]));
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let gp = idx[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        tp += gp;
        fp += (j + 1 - i) - gp;
        if gp > 0 {
            ap += (tp as f64 / (tp + fp) as f64) * (gp as f64 / pos as f64);
        }
        i = j + 1;
    }
    Ok(ap)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub precision: f64,
    pub sensitivity: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Thresholded metrics (`score >= threshold` predicts active). Precision and
/// F1 are 0 when nothing is predicted active; sensitivity is 0 without
/// positives.
pub fn confusion_metrics<T: Scalar>(scores: &[T], labels: &[u8], threshold: f64) -> Result<ConfusionMetrics, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricError::TooFewItems { need: 1, got: 0 });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s.as_f64() >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let sensitivity = ratio(tp, tp + fn_);
    let accuracy = ratio(tp + tn, scores.len());
    let f1 = if precision + sensitivity == 0.0 { 0.0 } else { 2.0 * precision * sensitivity / (precision + sensitivity) };
    Ok(ConfusionMetrics { precision, sensitivity, accuracy, f1 })
}

/// The six classification metrics reported per run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub precision: f64,
    pub sensitivity: f64,
    pub accuracy: f64,
    pub f1: f64,
}

impl ClassificationReport {
    pub const NAMES: [&'static str; 6] = ["roc_auc", "pr_auc", "precision", "sensitivity", "accuracy", "f1"];

    pub fn evaluate<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<Self, MetricError> {
        let c = confusion_metrics(scores, labels, DEFAULT_THRESHOLD)?;
        Ok(Self {
            roc_auc: roc_auc(scores, labels)?,
            pr_auc: pr_auc(scores, labels)?,
            precision: c.precision,
            sensitivity: c.sensitivity,
            accuracy: c.accuracy,
            f1: c.f1,
        })
    }

    pub fn values(&self) -> [f64; 6] {
        [self.roc_auc, self.pr_auc, self.precision, self.sensitivity, self.accuracy, self.f1]
    }
}

/// Compounds with distinct real activities; higher ranks higher.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedDataset {
    activities: Vec<f64>,
}

impl RankedDataset {
    pub fn new(activities: Vec<f64>) -> Result<Self, MetricError> {
        let mut sorted = activities.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(MetricError::TiedActivities);
        }
        Ok(Self { activities })
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }

    pub fn activities(&self) -> &[f64] {
        &self.activities
    }

    /// Indices ordered from most to least active.
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.activities[b].partial_cmp(&self.activities[a]).unwrap_or(Ordering::Equal));
        idx
    }

    /// All `(i, j)` with `i` more active than `j`; `n(n−1)/2` pairs.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.len() * self.len().saturating_sub(1) / 2);
        for i in 0..self.len() {
            for j in 0..self.len() {
                if self.activities[i] > self.activities[j] {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Counts pairs `i < j` with `xs[i] > xs[j]` (strict), sorting `xs`.
fn strict_inversions(xs: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = xs.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = strict_inversions(&mut xs[..mid], buf) + strict_inversions(&mut xs[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if xs[i] <= xs[j] {
            buf.push(xs[i]);
            i += 1;
        } else {
            count += (mid - i) as u64;
            buf.push(xs[j]);
            j += 1;
        }
    }
    buf.extend_from_slice(&xs[i..mid]);
    buf.extend_from_slice(&xs[j..n]);
    xs.copy_from_slice(buf);
    count
}

/// Fraction of truth-ordered pairs the scores fail to order strictly.
pub fn nci<T: Scalar>(truth: &RankedDataset, scores: &[T]) -> Result<f64, MetricError> {
    let n = truth.len();
    if scores.len() != n {
        return Err(MetricError::LengthMismatch(n, scores.len()));
    }
    if n < 2 {
        return Err(MetricError::TooFewItems { need: 2, got: n });
    }
    // Along the truth order, a correctly ordered pair is a strict descent.
    let mut seq: Vec<f64> = truth.order().iter().map(|&i| scores[i].as_f64()).collect();
    let concordant = strict_inversions(&mut seq, &mut Vec::with_capacity(n));
    let total = (n * (n - 1) / 2) as u64;
    Ok((total - concordant) as f64 / total as f64)
}

/// Concordance index, `1 − nCI`.
pub fn concordance_index<T: Scalar>(truth: &RankedDataset, scores: &[T]) -> Result<f64, MetricError> {
    nci(truth, scores).map(|x| 1.0 - x)
}

/// Cutoff given as a count or as a percentage of the list.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TopK {
    Count(usize),
    Percent(f64),
}

impl TopK {
    /// `"3"` or `"5%"`.
    pub fn label(self) -> String {
        match self {
            TopK::Count(k) => k.to_string(),
            TopK::Percent(p) => format!("{p}%"),
        }
    }

    pub fn resolve(self, n: usize) -> Result<usize, MetricError> {
        let k = match self {
            TopK::Count(k) => k,
            TopK::Percent(p) => (p * n as f64 / 100.0).ceil() as usize,
        };
        if k > n {
            return Err(MetricError::KTooLarge { k, n });
        }
        if k == 0 {
            return Err(MetricError::TooFewItems { need: 1, got: 0 });
        }
        Ok(k)
    }
}

fn score_order<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| cmp(scores[b], scores[a]));
    idx
}

/// `|top-k by score ∩ top-k by truth| / k`; score ties keep input order.
pub fn recall_at<T: Scalar>(truth: &RankedDataset, scores: &[T], k: TopK) -> Result<f64, MetricError> {
    if scores.len() != truth.len() {
        return Err(MetricError::LengthMismatch(truth.len(), scores.len()));
    }
    let k = k.resolve(truth.len())?;
    let top_truth: std::collections::HashSet<usize> = truth.order().into_iter().take(k).collect();
    let hits = score_order(scores).into_iter().take(k).filter(|i| top_truth.contains(i)).count();
    Ok(hits as f64 / k as f64)
}

/// NDCG@k with gain `n − true_rank` (best compound `n − 1`, worst 0) and
/// discount `1 / log2(position + 1)`.
pub fn ndcg_at<T: Scalar>(truth: &RankedDataset, scores: &[T], k: TopK) -> Result<f64, MetricError> {
    let n = truth.len();
    if scores.len() != n {
        return Err(MetricError::LengthMismatch(n, scores.len()));
    }
    let k = k.resolve(n)?;
    let mut gain = vec![0.0; n];
    for (rank0, i) in truth.order().into_iter().enumerate() {
        gain[i] = (n - (rank0 + 1)) as f64;
    }
    let discount = |pos: usize| 1.0 / ((pos + 1) as f64).log2();
    let dcg: f64 = score_order(scores).into_iter().take(k).enumerate().map(|(p, i)| gain[i] * discount(p + 1)).sum();
    let idcg: f64 = (1..=k).map(|p| (n - p) as f64 * discount(p)).sum();
    Ok(if idcg == 0.0 { 1.0 } else { dcg / idcg })
}
