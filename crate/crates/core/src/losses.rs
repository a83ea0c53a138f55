//! Cross-entropy and the alpha-balanced focal loss for multi-class
//! probability vectors, with analytic gradients with respect to logits.
//!
//! Both losses act on `p_t`, the predicted probability of the true class.
//! The focal loss scales cross-entropy by `alpha * (1 - p_t)^gamma`; with
//! `gamma = 0` and `alpha = 1` the two coincide exactly because they share
//! one code path, including the epsilon clamp inside the logarithm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Matrix;

/// Loss family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    CrossEntropy,
    Focal,
}

/// Loss family plus its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub family: LossFamily,
    /// Balancing weight; multiplies every sample's focal loss.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Focusing parameter; 0 recovers cross-entropy.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Clamp floor for log arguments. The modulating factor is not clamped,
    /// which keeps the focal loss exactly zero at `p_t = 1`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    2.0
}

fn default_epsilon() -> f64 {
    1e-12
}

impl LossConfig {
    pub fn cross_entropy() -> Self {
        LossConfig {
            family: LossFamily::CrossEntropy,
            alpha: 1.0,
            gamma: 0.0,
            epsilon: default_epsilon(),
        }
    }

    pub fn focal(alpha: f64, gamma: f64) -> Self {
        LossConfig {
            family: LossFamily::Focal,
            alpha,
            gamma,
            epsilon: default_epsilon(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 8.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 8], got {}",
                self.alpha
            )));
        }
        if !(0.0..=10.0).contains(&self.gamma) {
            return Err(Error::invalid(format!(
                "gamma must lie in [0, 10], got {}",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-6) {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0, 1e-6], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Effective (alpha, gamma): cross-entropy is focal at (1, 0).
    fn effective(&self) -> (f64, f64) {
        match self.family {
            LossFamily::CrossEntropy => (1.0, 0.0),
            LossFamily::Focal => (self.alpha, self.gamma),
        }
    }
}

/// A batch of simplex rows plus the true class of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    probabilities: Matrix,
    labels: Vec<usize>,
}

impl PredictionBatch {
    /// Validates that every row sums to 1 within 1e-6, entries lie in
    /// [0, 1], and labels are in range.
    pub fn new(probabilities: Matrix, labels: Vec<usize>) -> Result<Self> {
        if probabilities.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} probability rows but {} labels",
                probabilities.rows(),
                labels.len()
            )));
        }
        if probabilities.cols() == 0 {
            return Err(Error::invalid("probability rows must be non-empty"));
        }
        for (i, row) in probabilities.iter_rows().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "probability row {i} sums to {sum}, not 1"
                )));
            }
            if row.iter().any(|&p| !(-1e-9..=1.0 + 1e-9).contains(&p)) {
                return Err(Error::invalid(format!(
                    "probability row {i} has entries outside [0, 1]"
                )));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= probabilities.cols()) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {} classes",
                probabilities.cols()
            )));
        }
        Ok(PredictionBatch {
            probabilities,
            labels,
        })
    }

    pub fn probabilities(&self) -> &Matrix {
        &self.probabilities
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Predicted probability of the true class per sample.
    pub fn true_class_probs(&self) -> Vec<f64> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &l)| self.probabilities.row(i)[l])
            .collect()
    }
}

/// `-alpha * (1 - p)^gamma * ln(max(p, eps))` — the shared kernel.
#[inline]
pub fn pointwise_loss(p_t: f64, alpha: f64, gamma: f64, epsilon: f64) -> f64 {
    let modulating = if gamma == 0.0 {
        1.0
    } else {
        (1.0 - p_t).powf(gamma)
    };
    -alpha * modulating * p_t.max(epsilon).ln()
}

fn reduce(batch: &PredictionBatch, alpha: f64, gamma: f64, epsilon: f64) -> (Vec<f64>, f64) {
    let per_sample: Vec<f64> = batch
        .true_class_probs()
        .into_iter()
        .map(|p| pointwise_loss(p, alpha, gamma, epsilon))
        .collect();
    let mean = per_sample.iter().sum::<f64>() / per_sample.len().max(1) as f64;
    (per_sample, mean)
}

/// Per-sample and mean cross-entropy `-ln(max(p_t, eps))`.
pub fn cross_entropy(batch: &PredictionBatch) -> (Vec<f64>, f64) {
    reduce(batch, 1.0, 0.0, default_epsilon())
}

/// Per-sample and mean alpha-balanced focal loss.
pub fn focal_loss(batch: &PredictionBatch, cfg: &LossConfig) -> Result<(Vec<f64>, f64)> {
    cfg.validate()?;
    let (alpha, gamma) = cfg.effective();
    Ok(reduce(batch, alpha, gamma, cfg.epsilon))
}

/// Mean loss of a batch under `cfg` (either family).
pub fn mean_loss(batch: &PredictionBatch, cfg: &LossConfig) -> Result<f64> {
    focal_loss(batch, cfg).map(|(_, mean)| mean)
}

/// Numerically stable softmax of one logit row.
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax.
pub fn softmax(logits: &Matrix) -> Matrix {
    let rows: Vec<Vec<f64>> = logits.iter_rows().map(softmax_row).collect();
    Matrix::from_rows(&rows)
}

/// d(loss_sample)/d(p_t) for the clamped kernel; exact derivative of
/// [`pointwise_loss`], including the flat region below the clamp.
#[inline]
fn dloss_dp(p_t: f64, alpha: f64, gamma: f64, epsilon: f64) -> f64 {
    let u = 1.0 - p_t;
    let log_term = p_t.max(epsilon).ln();
    let focus = if gamma == 0.0 || u == 0.0 {
        0.0
    } else {
        alpha * gamma * u.powf(gamma - 1.0) * log_term
    };
    let ce_term = if p_t > epsilon {
        let modulating = if gamma == 0.0 { 1.0 } else { u.powf(gamma) };
        -alpha * modulating / p_t
    } else {
        0.0
    };
    focus + ce_term
}

/// Gradient of one sample's loss with respect to its logits.
pub fn sample_logit_gradient(logits: &[f64], label: usize, cfg: &LossConfig) -> Vec<f64> {
    let (alpha, gamma) = cfg.effective();
    let probs = softmax_row(logits);
    let p_t = probs[label];
    let dp = dloss_dp(p_t, alpha, gamma, cfg.epsilon);
    // d p_t / d z_j = p_t (delta_tj - p_j)
    probs
        .iter()
        .enumerate()
        .map(|(j, &p_j)| {
            let indicator = if j == label { 1.0 } else { 0.0 };
            dp * p_t * (indicator - p_j)
        })
        .collect()
}

/// Gradient of the mean batch loss with respect to every logit.
pub fn loss_gradient(logits: &Matrix, labels: &[usize], cfg: &LossConfig) -> Result<Matrix> {
    cfg.validate()?;
    if logits.rows() != labels.len() {
        return Err(Error::invalid(format!(
            "{} logit rows but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if logits.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("logits must be finite"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {} classes",
            logits.cols()
        )));
    }
    let batch = logits.rows().max(1) as f64;
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let g = sample_logit_gradient(logits.row(i), labels[i], cfg);
        for (dst, src) in out.row_mut(i).iter_mut().zip(g) {
            *dst = src / batch;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single-row batch with probability `p` on `label` and the remainder
    /// spread over the other classes.
    fn batch_with_pt(p: f64, label: usize, classes: usize) -> PredictionBatch {
        let mut row = vec![(1.0 - p) / (classes - 1) as f64; classes];
        row[label] = p;
        PredictionBatch::new(Matrix::from_rows(&[row]), vec![label]).unwrap()
    }

    #[test]
    fn cross_entropy_known_values() {
        let (per, mean) = cross_entropy(&batch_with_pt(1.0, 0, 3));
        assert_eq!(per[0], 0.0);
        assert_eq!(mean, 0.0);

        let (per, _) = cross_entropy(&batch_with_pt(0.5, 1, 3));
        assert!((per[0] - std::f64::consts::LN_2).abs() < 1e-12);

        let (per, _) = cross_entropy(&batch_with_pt((-1.0f64).exp(), 2, 3));
        assert!((per[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn focal_known_values() {
        // gamma=0, alpha=1 behaves exactly like cross-entropy
        let cfg = LossConfig::focal(1.0, 0.0);
        let (per, _) = focal_loss(&batch_with_pt(0.5, 0, 3), &cfg).unwrap();
        assert_eq!(per[0], cross_entropy(&batch_with_pt(0.5, 0, 3)).0[0]);

        // p_t = 0.9, gamma = 2: 0.01 * (-ln 0.9)
        let cfg = LossConfig::focal(1.0, 2.0);
        let (per, _) = focal_loss(&batch_with_pt(0.9, 0, 3), &cfg).unwrap();
        let expected = 0.01_f64 * -(0.9_f64.ln());
        assert!((per[0] - expected).abs() < 1e-12, "got {}", per[0]);
        assert!((per[0] - 0.00105361).abs() < 1e-8);

        // perfect prediction is exactly zero for any (alpha, gamma)
        for (a, g) in [(0.25, 0.5), (1.5, 2.0), (1.75, 5.0)] {
            let cfg = LossConfig::focal(a, g);
            let (per, _) = focal_loss(&batch_with_pt(1.0, 1, 3), &cfg).unwrap();
            assert_eq!(per[0], 0.0);
        }
    }

    #[test]
    fn alpha_scales_linearly() {
        for p in [0.05, 0.3, 0.8, 0.99] {
            let b = batch_with_pt(p, 0, 4);
            let (l1, _) = focal_loss(&b, &LossConfig::focal(0.75, 2.0)).unwrap();
            let (l2, _) = focal_loss(&b, &LossConfig::focal(1.5, 2.0)).unwrap();
            assert_eq!(2.0 * l1[0], l2[0]);
        }
    }

    #[test]
    fn ce_gradient_matches_hand_computation() {
        // 2-class logits (0,0), label 0: softmax = (0.5, 0.5),
        // gradient = (p - 1, p) = (-0.5, 0.5) for batch size 1
        let logits = Matrix::from_rows(&[vec![0.0, 0.0]]);
        let g = loss_gradient(&logits, &[0], &LossConfig::cross_entropy()).unwrap();
        assert!((g.row(0)[0] + 0.5).abs() < 1e-12);
        assert!((g.row(0)[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn focal_gamma_zero_gradient_equals_ce_gradient() {
        let logits = Matrix::from_rows(&[
            vec![0.3, -1.2, 0.7, 2.0],
            vec![-0.5, 0.1, 0.0, 1.4],
        ]);
        let labels = [3, 1];
        let ce = loss_gradient(&logits, &labels, &LossConfig::cross_entropy()).unwrap();
        let fl = loss_gradient(&logits, &labels, &LossConfig::focal(1.0, 0.0)).unwrap();
        for (a, b) in ce.data().iter().zip(fl.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_hyperparameters() {
        assert!(LossConfig::focal(0.0, 2.0).validate().is_err());
        assert!(LossConfig::focal(9.0, 2.0).validate().is_err());
        assert!(LossConfig::focal(1.0, -0.1).validate().is_err());
        assert!(LossConfig::focal(1.0, 11.0).validate().is_err());
        let mut cfg = LossConfig::cross_entropy();
        cfg.epsilon = 1e-3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn prediction_batch_validates_rows() {
        let bad_sum = Matrix::from_rows(&[vec![0.5, 0.6]]);
        assert!(PredictionBatch::new(bad_sum, vec![0]).is_err());
        let bad_label = Matrix::from_rows(&[vec![0.5, 0.5]]);
        assert!(PredictionBatch::new(bad_label, vec![2]).is_err());
    }

    #[test]
    fn loss_config_json_round_trip() {
        let cfg = LossConfig::focal(1.5, 2.0);
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"focal\""));
        let back: LossConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        let parsed: LossConfig =
            serde_json::from_str(r#"{"family":"focal","alpha":1.5,"gamma":2.0}"#).unwrap();
        assert_eq!(parsed.alpha, 1.5);
        assert_eq!(parsed.epsilon, 1e-12);
    }
}
