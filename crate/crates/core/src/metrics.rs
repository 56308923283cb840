//! Ranking metrics for multilabel score matrices: microAUC, one error,
//! ranking loss and average precision.
//!
//! Whenever a label ranking is needed, ties are broken towards the lower
//! label index so results do not depend on sort implementation details.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MlcmError, Result};
use crate::types::{LabelMatrix, TiePolicy};

/// Which average precision to compute.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApVariant {
    /// Precision at every cutoff `s = 1..l`, averaged over cutoffs.
    #[default]
    Cutoff,
    /// Precision at the rank of each relevant label, averaged over relevant labels.
    Standard,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub tie_policy: TiePolicy,
    pub ap_variant: ApVariant,
}

/// A mean over instances, with the number of instances left out of it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceMean {
    pub value: f64,
    pub skipped: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub micro_auc: f64,
    pub one_error: f64,
    pub ranking_loss: f64,
    pub avg_precision: f64,
    /// Instances left out of ranking loss (no relevant or no irrelevant label).
    pub skipped_instances: usize,
}

pub(crate) fn check_inputs(scores: &DMatrix<f64>, truth: &LabelMatrix) -> Result<()> {
    if scores.shape() != truth.shape() {
        return Err(MlcmError::ShapeMismatch {
            score_rows: scores.nrows(),
            score_cols: scores.ncols(),
            truth_rows: truth.nrows(),
            truth_cols: truth.ncols(),
        });
    }
    for i in 0..scores.nrows() {
        for j in 0..scores.ncols() {
            let v = scores[(i, j)];
            if !v.is_finite() {
                return Err(MlcmError::InvalidScore {
                    row: i + 1,
                    col: j + 1,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Turns (correct, tied, total) pair counts into a score under `tie`.
fn pair_fraction(correct: u64, tied: u64, total: u64, tie: TiePolicy) -> f64 {
    match tie {
        TiePolicy::Strict => correct as f64 / total as f64,
        TiePolicy::Half => (2 * correct + tied) as f64 / (2 * total) as f64,
    }
}

/// Fraction of (relevant, irrelevant) label pairs ordered wrongly within each
/// instance, averaged over instances that have both kinds of label.
pub fn ranking_loss(scores: &DMatrix<f64>, truth: &LabelMatrix, tie: TiePolicy) -> Result<InstanceMean> {
    check_inputs(scores, truth)?;
    let (n, l) = truth.shape();
    let mut total = 0.0;
    let mut used = 0usize;
    let mut negatives = Vec::with_capacity(l);
    for i in 0..n {
        negatives.clear();
        negatives.extend((0..l).filter(|&j| !truth.get(i, j)).map(|j| scores[(i, j)]));
        let n_pos = l - negatives.len();
        if n_pos == 0 || negatives.is_empty() {
            continue;
        }
        negatives.sort_by(f64::total_cmp);
        let (mut below, mut tied) = (0u64, 0u64);
        for j in (0..l).filter(|&j| truth.get(i, j)) {
            let p = scores[(i, j)];
            let lo = negatives.partition_point(|&x| x < p);
            let hi = negatives.partition_point(|&x| x <= p);
            below += lo as u64;
            tied += (hi - lo) as u64;
        }
        let pairs = (n_pos * negatives.len()) as u64;
        total += 1.0 - pair_fraction(below, tied, pairs, tie);
        used += 1;
    }
    if used == 0 {
        return Err(MlcmError::AllInstancesDegenerate);
    }
    Ok(InstanceMean {
        value: total / used as f64,
        skipped: n - used,
    })
}

/// Fraction of (positive, negative) entry pairs, taken over the whole
/// flattened matrix, where the positive entry scores higher. Runs in
/// `O(nl log nl)`: one sort, then a sweep over groups of equal scores.
pub fn micro_auc(scores: &DMatrix<f64>, truth: &LabelMatrix, tie: TiePolicy) -> Result<f64> {
    check_inputs(scores, truth)?;
    let (n, l) = truth.shape();
    let mut entries: Vec<(f64, bool)> = Vec::with_capacity(n * l);
    for i in 0..n {
        for j in 0..l {
            entries.push((scores[(i, j)], truth.get(i, j)));
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n_pos = entries.iter().filter(|e| e.1).count() as u64;
    let n_neg = entries.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MlcmError::DegenerateTruth);
    }

    let (mut correct, mut tied, mut neg_below) = (0u64, 0u64, 0u64);
    let mut start = 0;
    while start < entries.len() {
        let value = entries[start].0;
        let end = start + entries[start..].partition_point(|e| e.0.total_cmp(&value) == Ordering::Equal);
        let pos = entries[start..end].iter().filter(|e| e.1).count() as u64;
        let neg = (end - start) as u64 - pos;
        correct += pos * neg_below;
        tied += pos * neg;
        neg_below += neg;
        start = end;
    }
    Ok(pair_fraction(correct, tied, n_pos * n_neg, tie))
}

/// Label indices of row `i` sorted by descending score, ties by index.
fn ranked_labels(scores: &DMatrix<f64>, i: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.ncols()).collect();
    order.sort_by(|&a, &b| scores[(i, b)].total_cmp(&scores[(i, a)]).then(a.cmp(&b)));
    order
}

fn top_label(scores: &DMatrix<f64>, i: usize) -> usize {
    let mut best = 0;
    for j in 1..scores.ncols() {
        if scores[(i, j)] > scores[(i, best)] {
            best = j;
        }
    }
    best
}

/// Fraction of instances whose highest-scored label is irrelevant. Instances
/// with no relevant label are skipped.
pub fn one_error(scores: &DMatrix<f64>, truth: &LabelMatrix) -> Result<InstanceMean> {
    check_inputs(scores, truth)?;
    let n = truth.nrows();
    let (mut errors, mut used) = (0usize, 0usize);
    for i in 0..n {
        if truth.row_count(i) == 0 {
            continue;
        }
        used += 1;
        if !truth.get(i, top_label(scores, i)) {
            errors += 1;
        }
    }
    let value = if used == 0 { 0.0 } else { errors as f64 / used as f64 };
    Ok(InstanceMean {
        value,
        skipped: n - used,
    })
}

pub fn average_precision(scores: &DMatrix<f64>, truth: &LabelMatrix, variant: ApVariant) -> Result<f64> {
    check_inputs(scores, truth)?;
    let (n, l) = truth.shape();
    let mut total = 0.0;
    let mut used = 0usize;
    for i in 0..n {
        let order = ranked_labels(scores, i);
        match variant {
            ApVariant::Cutoff => {
                let mut hits = 0usize;
                let mut sum = 0.0;
                for (s, &j) in order.iter().enumerate() {
                    hits += usize::from(truth.get(i, j));
                    sum += hits as f64 / (s + 1) as f64;
                }
                total += sum / l as f64;
                used += 1;
            }
            ApVariant::Standard => {
                let relevant = truth.row_count(i);
                if relevant == 0 {
                    continue;
                }
                let mut hits = 0usize;
                let mut sum = 0.0;
                for (r, &j) in order.iter().enumerate() {
                    if truth.get(i, j) {
                        hits += 1;
                        sum += hits as f64 / (r + 1) as f64;
                    }
                }
                total += sum / relevant as f64;
                used += 1;
            }
        }
    }
    Ok(if used == 0 { 0.0 } else { total / used as f64 })
}

/// All four metrics under one set of options.
pub fn evaluate(scores: &DMatrix<f64>, truth: &LabelMatrix, opts: &EvalOptions) -> Result<MetricReport> {
    let rl = ranking_loss(scores, truth, opts.tie_policy)?;
    Ok(MetricReport {
        micro_auc: micro_auc(scores, truth, opts.tie_policy)?,
        one_error: one_error(scores, truth)?.value,
        ranking_loss: rl.value,
        avg_precision: average_precision(scores, truth, opts.ap_variant)?,
        skipped_instances: rl.skipped,
    })
}

/// Literal pair enumerations of the two pairwise metrics, kept as reference
/// implementations for the fast paths above.
pub mod oracle {
    use super::*;

    /// `O(n^2 l^2)` microAUC.
    pub fn brute_force_micro_auc(scores: &DMatrix<f64>, truth: &LabelMatrix, tie: TiePolicy) -> Result<f64> {
        check_inputs(scores, truth)?;
        let (n, l) = truth.shape();
        let (mut correct, mut tied, mut pairs) = (0u64, 0u64, 0u64);
        for pi in 0..n {
            for pj in 0..l {
                if !truth.get(pi, pj) {
                    continue;
                }
                for ni in 0..n {
                    for nj in 0..l {
                        if truth.get(ni, nj) {
                            continue;
                        }
                        pairs += 1;
                        let (p, q) = (scores[(pi, pj)], scores[(ni, nj)]);
                        if p > q {
                            correct += 1;
                        } else if p == q {
                            tied += 1;
                        }
                    }
                }
            }
        }
        if pairs == 0 {
            return Err(MlcmError::DegenerateTruth);
        }
        Ok(pair_fraction(correct, tied, pairs, tie))
    }

    /// `O(n l^2)` ranking loss.
    pub fn brute_force_ranking_loss(
        scores: &DMatrix<f64>,
        truth: &LabelMatrix,
        tie: TiePolicy,
    ) -> Result<InstanceMean> {
        check_inputs(scores, truth)?;
        let (n, l) = truth.shape();
        let mut total = 0.0;
        let mut used = 0usize;
        for i in 0..n {
            let (mut correct, mut tied, mut pairs) = (0u64, 0u64, 0u64);
            for a in 0..l {
                for b in 0..l {
                    if truth.get(i, a) && !truth.get(i, b) {
                        pairs += 1;
                        let (p, q) = (scores[(i, a)], scores[(i, b)]);
                        if p > q {
                            correct += 1;
                        } else if p == q {
                            tied += 1;
                        }
                    }
                }
            }
            if pairs == 0 {
                continue;
            }
            total += 1.0 - pair_fraction(correct, tied, pairs, tie);
            used += 1;
        }
        if used == 0 {
            return Err(MlcmError::AllInstancesDegenerate);
        }
        Ok(InstanceMean {
            value: total / used as f64,
            skipped: n - used,
        })
    }
}
