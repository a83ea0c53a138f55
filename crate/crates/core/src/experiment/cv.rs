//! Cross-validated hyperparameter and epoch selection.

use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::experiment::split::stratified_folds;
use crate::experiment::Method;
use crate::losses::LossConfig;
use crate::nn::{train_with_validation, Network, TrainConfig};
use crate::sampling::{oversample, undersample, AugmentationConfig};
use crate::seed::child_seed;

/// Mean validation loss per candidate and epoch, plus the selection.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    /// Candidate alpha values; a single `None` for methods without a sweep.
    pub alphas: Vec<Option<f64>>,
    /// `surface[a][e]` = mean validation loss of candidate `a` after epoch
    /// `e + 1`, averaged over folds.
    pub surface: Vec<Vec<f64>>,
    pub selected_alpha: Option<f64>,
    /// 1-based epoch count minimising the mean validation loss.
    pub selected_epoch: usize,
}

/// Loss used when training under a method, given one candidate alpha.
pub(crate) fn loss_for(method: &Method, alpha: Option<f64>) -> LossConfig {
    match method {
        Method::Focal { gamma, .. } => {
            LossConfig::focal(alpha.expect("focal candidates carry alpha"), *gamma)
        }
        _ => LossConfig::cross_entropy(),
    }
}

/// Resampling applied to a training portion under a method (validation and
/// test data are never resampled).
pub(crate) fn resample_for(
    method: &Method,
    data: &LabeledDataset,
    seed: u64,
) -> Result<LabeledDataset> {
    match method {
        Method::UnderSampling => undersample(data, seed),
        Method::OverSampling => {
            let aug = AugmentationConfig {
                seed,
                ..AugmentationConfig::default()
            };
            oversample(data, &aug)
        }
        _ => Ok(data.clone()),
    }
}

/// Candidate alphas for a method (`None` when there is nothing to sweep).
fn candidates(method: &Method) -> Vec<Option<f64>> {
    match method {
        Method::Focal { alphas, .. } => alphas.iter().copied().map(Some).collect(),
        _ => vec![None],
    }
}

/// Pick `(candidate, epoch)` minimising the surface; ties prefer the
/// smaller epoch, then the smaller candidate index (ascending alpha).
pub(crate) fn select_from_surface(surface: &[Vec<f64>]) -> (usize, usize) {
    let mut best = (0usize, 0usize);
    let mut best_loss = f64::INFINITY;
    // epoch-major scan implements the tie-break order directly
    let epochs = surface.first().map_or(0, Vec::len);
    for e in 0..epochs {
        for (a, row) in surface.iter().enumerate() {
            if row[e] < best_loss {
                best_loss = row[e];
                best = (a, e + 1);
            }
        }
    }
    best
}

/// Five-fold-style cross-validation of one method on the training set:
/// trains `folds` models per candidate to `cfg.max_epochs`, recording mean
/// validation loss per epoch; selects the loss-minimising (alpha, epoch).
pub fn cross_validate(
    net: &Network,
    train: &LabeledDataset,
    method: &Method,
    cfg: &TrainConfig,
    folds: usize,
    seed: u64,
) -> Result<CvOutcome> {
    method.validate()?;
    let fold_sets = stratified_folds(train, folds, child_seed(seed, "folds", 0))?;
    let alphas = candidates(method);

    let jobs: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|a| (0..folds).map(move |f| (a, f)))
        .collect();
    let histories: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(a, f)| -> Result<Vec<f64>> {
            let val_idx = &fold_sets[f];
            let train_idx: Vec<usize> = (0..train.len())
                .filter(|i| !val_idx.contains(i))
                .collect();
            let fold_train = train.subset(&train_idx);
            let fold_val = train.subset(val_idx);
            let job_id = (a as u64) << 8 | f as u64;
            let fold_train =
                resample_for(method, &fold_train, child_seed(seed, "cv-resample", job_id))?;
            let job_cfg = TrainConfig {
                loss: loss_for(method, alphas[a]),
                seed: child_seed(seed, "cv-train", job_id),
                ..cfg.clone()
            };
            let run = train_with_validation(net, &fold_train, &job_cfg, cfg.max_epochs, Some(&fold_val))?;
            Ok(run.val_history)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut surface = vec![vec![0.0f64; cfg.max_epochs]; alphas.len()];
    for (&(a, _), history) in jobs.iter().zip(&histories) {
        if history.len() != cfg.max_epochs {
            return Err(Error::Format(
                "validation history shorter than max_epochs".into(),
            ));
        }
        for (e, v) in history.iter().enumerate() {
            surface[a][e] += v / folds as f64;
        }
    }
    let (a_idx, epoch) = select_from_surface(&surface);
    Ok(CvOutcome {
        selected_alpha: alphas[a_idx],
        alphas,
        surface,
        selected_epoch: epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_prefers_min_then_small_epoch_then_small_alpha() {
        // constant surface: tie-break lands on epoch 1, first candidate
        let flat = vec![vec![1.0; 4]; 3];
        assert_eq!(select_from_surface(&flat), (0, 1));

        // clear minimum wins regardless of position
        let mut s = vec![vec![1.0; 4]; 2];
        s[1][2] = 0.25;
        assert_eq!(select_from_surface(&s), (1, 3));

        // equal minima at different epochs: earlier epoch wins
        let mut s = vec![vec![1.0; 4]; 2];
        s[1][1] = 0.5;
        s[0][3] = 0.5;
        assert_eq!(select_from_surface(&s), (1, 2));

        // equal minima at the same epoch: smaller candidate index wins
        let mut s = vec![vec![1.0; 4]; 2];
        s[0][1] = 0.5;
        s[1][1] = 0.5;
        assert_eq!(select_from_surface(&s), (0, 2));
    }
}
