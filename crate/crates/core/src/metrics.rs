//! Evaluation metrics: confusion matrix, accuracy, one-vs-rest F1 and
//! AUROC (exact rank statistic), imbalance ratio, relative improvement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Matrix;

/// Everything reported for one evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub f1_per_class: Vec<f64>,
    /// Unweighted mean over classes (macro averaging, logged in reports).
    pub f1_macro: f64,
    /// One-vs-rest AUROC per class; `None` when a class has no positives or
    /// no negatives in the evaluated set.
    pub auroc_per_class: Vec<Option<f64>>,
    /// Unweighted mean over the defined per-class AUROCs.
    pub auroc_macro: f64,
    /// Imbalance ratio of the evaluated set's true labels.
    pub rho: f64,
    /// Averaging conventions, recorded in every serialised report.
    pub averaging: String,
}

/// Entry (i, j) counts samples with true class i predicted as j.
pub fn confusion_matrix(
    true_labels: &[usize],
    predicted: &[usize],
    classes: usize,
) -> Result<Vec<Vec<usize>>> {
    if true_labels.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "{} true labels but {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    let mut m = vec![vec![0usize; classes]; classes];
    for (&t, &p) in true_labels.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(Error::invalid(format!(
                "label ({t}, {p}) out of range for {classes} classes"
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Trace over total count; the empty matrix has no defined accuracy.
pub fn accuracy(confusion: &[Vec<usize>]) -> Result<f64> {
    let total: usize = confusion.iter().map(|r| r.iter().sum::<usize>()).sum();
    if total == 0 {
        return Err(Error::invalid("accuracy undefined for an empty confusion matrix"));
    }
    let trace: usize = confusion.iter().enumerate().map(|(i, r)| r[i]).sum();
    Ok(trace as f64 / total as f64)
}

/// One-vs-rest F1 per class plus the macro (unweighted) mean. A class with
/// zero support and zero predictions scores 0 by convention.
pub fn f1_scores(confusion: &[Vec<usize>]) -> Result<(Vec<f64>, f64)> {
    let classes = confusion.len();
    let total: usize = confusion.iter().map(|r| r.iter().sum::<usize>()).sum();
    if total == 0 {
        return Err(Error::invalid("F1 undefined for an empty confusion matrix"));
    }
    let mut per_class = Vec::with_capacity(classes);
    for c in 0..classes {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|r| r[c]).sum();
        if support == 0 && predicted == 0 {
            log::debug!("class {c}: zero support and zero predictions, F1 = 0 by convention");
            per_class.push(0.0);
            continue;
        }
        let f1 = if tp == 0 {
            0.0
        } else {
            let precision = tp as f64 / predicted as f64;
            let recall = tp as f64 / support as f64;
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(f1);
    }
    let macro_f1 = per_class.iter().sum::<f64>() / classes as f64;
    Ok((per_class, macro_f1))
}

/// Exact one-vs-rest AUROC per class by the rank statistic (probability a
/// random positive outranks a random negative, ties counted one half), plus
/// the macro mean over the classes where it is defined.
pub fn roc_auc(scores: &Matrix, true_labels: &[usize]) -> Result<(Vec<Option<f64>>, f64)> {
    if scores.rows() != true_labels.len() {
        return Err(Error::invalid(format!(
            "{} score rows but {} labels",
            scores.rows(),
            true_labels.len()
        )));
    }
    let classes = scores.cols();
    if let Some(&bad) = true_labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range")));
    }
    let mut per_class = Vec::with_capacity(classes);
    let mut defined = Vec::new();
    for c in 0..classes {
        let column: Vec<f64> = (0..scores.rows()).map(|r| scores.row(r)[c]).collect();
        let auc = binary_auc_ranked(&column, true_labels, c);
        if auc.is_none() {
            log::debug!("class {c}: AUROC undefined (needs a positive and a negative)");
        }
        if let Some(v) = auc {
            defined.push(v);
        }
        per_class.push(auc);
    }
    if defined.is_empty() {
        return Err(Error::invalid(
            "AUROC undefined for every class in this evaluation",
        ));
    }
    let macro_auc = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok((per_class, macro_auc))
}

/// Mann-Whitney statistic with midranks; exact for ties because ranks are
/// accumulated in integer half-units.
fn binary_auc_ranked(scores: &[f64], labels: &[usize], positive: usize) -> Option<f64> {
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&l| l == positive).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // rank sum of positives, in half-units to keep midranks exact
    let mut rank_sum_2: u128 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share midrank (i+1 + j) / 2
        let midrank_2 = (i + 1 + j) as u128; // twice the midrank
        let pos_in_tie = order[i..j]
            .iter()
            .filter(|&&idx| labels[idx] == positive)
            .count() as u128;
        rank_sum_2 += midrank_2 * pos_in_tie;
        i = j;
    }
    let np = n_pos as u128;
    let u2 = rank_sum_2 - np * (np + 1); // twice the U statistic
    Some(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Max class count over min class count; requires every count positive.
pub fn imbalance_ratio(class_counts: &[usize]) -> Result<f64> {
    if class_counts.is_empty() {
        return Err(Error::invalid("imbalance ratio needs at least one class"));
    }
    if class_counts.iter().any(|&c| c == 0) {
        return Err(Error::invalid("imbalance ratio undefined with an empty class"));
    }
    let max = *class_counts.iter().max().expect("non-empty");
    let min = *class_counts.iter().min().expect("non-empty");
    Ok(max as f64 / min as f64)
}

/// Percentage change of `metric_new` relative to a positive baseline.
pub fn relative_improvement(metric_new: f64, metric_baseline: f64) -> Result<f64> {
    if !(metric_baseline > 0.0) {
        return Err(Error::invalid(
            "relative improvement undefined for a non-positive baseline",
        ));
    }
    Ok(100.0 * (metric_new - metric_baseline) / metric_baseline)
}

impl EvaluationReport {
    /// Assemble the full report from class probabilities and true labels.
    /// Predictions are the per-row argmax.
    pub fn from_scores(scores: &Matrix, true_labels: &[usize]) -> Result<EvaluationReport> {
        if scores.rows() == 0 {
            return Err(Error::invalid("cannot evaluate an empty prediction set"));
        }
        let classes = scores.cols();
        let predicted: Vec<usize> = (0..scores.rows())
            .map(|r| {
                let row = scores.row(r);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect();
        let confusion = confusion_matrix(true_labels, &predicted, classes)?;
        let accuracy = accuracy(&confusion)?;
        let (f1_per_class, f1_macro) = f1_scores(&confusion)?;
        let (auroc_per_class, auroc_macro) = roc_auc(scores, true_labels)?;
        let mut counts = vec![0usize; classes];
        for &l in true_labels {
            counts[l] += 1;
        }
        let rho = if counts.iter().all(|&c| c > 0) {
            imbalance_ratio(&counts)?
        } else {
            f64::NAN
        };
        Ok(EvaluationReport {
            confusion,
            accuracy,
            f1_per_class,
            f1_macro,
            auroc_per_class,
            auroc_macro,
            rho,
            averaging: "macro (unweighted over classes); AUROC one-vs-rest".to_string(),
        })
    }
}

/// One-vs-rest ROC curve points (fpr, tpr) for plotting, threshold swept
/// over the distinct scores, descending.
pub fn roc_curve(scores: &[f64], labels: &[usize], positive: usize) -> Vec<(f64, f64)> {
    let n_pos = labels.iter().filter(|&&l| l == positive).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == positive {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        i = j;
    }
    points
}
