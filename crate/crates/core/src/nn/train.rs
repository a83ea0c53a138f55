//! Mini-batch training and batched inference.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::img::Image;
use crate::losses::{self, LossConfig, PredictionBatch};
use crate::mat::Matrix;
use crate::nn::adam::{adam_step, AdamState, Optimizer};
use crate::nn::params::ParameterSet;
use crate::nn::spec::Network;
use crate::seed::child_seed;

/// Optimisation settings for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_epsilon")]
    pub adam_epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "LossConfig::cross_entropy")]
    pub loss: LossConfig,
}

fn default_batch_size() -> usize {
    32
}

fn default_max_epochs() -> usize {
    100
}

fn default_learning_rate() -> f64 {
    0.001
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_epsilon() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            learning_rate: default_learning_rate(),
            optimizer: Optimizer::Adam,
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_epsilon: default_adam_epsilon(),
            seed: 0,
            loss: LossConfig::cross_entropy(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::invalid("adam epsilon must be positive"));
        }
        self.loss.validate()
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub params: ParameterSet,
    /// Mean training loss per epoch; length equals the trained epoch count.
    pub train_history: Vec<f64>,
    /// Mean loss on the held-out set per epoch (empty when none was given).
    pub val_history: Vec<f64>,
}

/// Flat channel-planar tensor of an image, scaled to [0, 1].
pub(crate) fn image_tensor(img: &Image) -> Vec<f64> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = vec![0.0f64; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(ch * h + y) * w + x] = f64::from(img.get(x, y, ch)) / 255.0;
            }
        }
    }
    out
}

fn dataset_tensors(net: &Network, data: &LabeledDataset) -> Result<Vec<Vec<f64>>> {
    let (c, h, w) = net.input_shape();
    data.images()
        .iter()
        .map(|img| {
            if img.channels() != c || img.height() != h || img.width() != w {
                return Err(Error::invalid(format!(
                    "image {}x{}x{} does not match network input {c}x{h}x{w}",
                    img.channels(),
                    img.height(),
                    img.width()
                )));
            }
            Ok(image_tensor(img))
        })
        .collect()
}

/// Forward a batch of images and return the logit matrix.
pub fn forward(net: &Network, params: &ParameterSet, images: &[Image]) -> Result<Matrix> {
    net.check_params(params)?;
    let (c, h, w) = net.input_shape();
    for img in images {
        if img.channels() != c || img.height() != h || img.width() != w {
            return Err(Error::invalid(format!(
                "image {}x{}x{} does not match network input {c}x{h}x{w}",
                img.channels(),
                img.height(),
                img.width()
            )));
        }
    }
    let rows: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| net.forward_sample(params, image_tensor(img)).logits)
        .collect();
    Ok(Matrix::from_rows(&rows))
}

/// Softmax probabilities for a labeled dataset, paired with its labels.
pub fn predict(
    net: &Network,
    params: &ParameterSet,
    data: &LabeledDataset,
) -> Result<PredictionBatch> {
    let logits = forward(net, params, data.images())?;
    PredictionBatch::new(losses::softmax(&logits), data.labels().to_vec())
}

/// Gradient of the mean batch loss with respect to every parameter.
pub fn backward(
    net: &Network,
    params: &ParameterSet,
    images: &[Image],
    labels: &[usize],
    loss: &LossConfig,
) -> Result<ParameterSet> {
    net.check_params(params)?;
    loss.validate()?;
    if images.is_empty() || images.len() != labels.len() {
        return Err(Error::invalid(format!(
            "need equally many images and labels, got {} and {}",
            images.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= net.classes()) {
        return Err(Error::invalid(format!("label {bad} out of range")));
    }
    let tensors: Vec<Vec<f64>> = images.iter().map(image_tensor).collect();
    let samples: Vec<(&[f64], usize)> = tensors
        .iter()
        .map(Vec::as_slice)
        .zip(labels.iter().copied())
        .collect();
    let (_, grads) = batch_gradient(net, params, &samples, loss);
    Ok(params.like_with(grads))
}

/// Samples per reduction chunk. Fixed so the pairwise summation order of
/// gradients never depends on the rayon thread count.
const GRAD_CHUNK: usize = 8;

/// Per-sample forward+backward over a batch; the gradient is the mean over
/// samples. Samples are accumulated sequentially within fixed-size chunks
/// and chunks are combined in index order, so the result is bitwise
/// reproducible on any thread count.
fn batch_gradient(
    net: &Network,
    params: &ParameterSet,
    samples: &[(&[f64], usize)],
    loss: &LossConfig,
) -> (f64, Vec<f64>) {
    let per_chunk: Vec<(f64, Vec<f64>)> = samples
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grads = vec![0.0f64; params.len()];
            let mut loss_sum = 0.0;
            for &(x, label) in chunk {
                let run = net.forward_sample(params, x.to_vec());
                let probs = losses::softmax_row(&run.logits);
                let (alpha, gamma) = match loss.family {
                    losses::LossFamily::CrossEntropy => (1.0, 0.0),
                    losses::LossFamily::Focal => (loss.alpha, loss.gamma),
                };
                loss_sum += losses::pointwise_loss(probs[label], alpha, gamma, loss.epsilon);
                let dlogits = losses::sample_logit_gradient(&run.logits, label, loss);
                net.backward_sample(params, &run.trace, &dlogits, &mut grads);
            }
            (loss_sum, grads)
        })
        .collect();

    let inv_b = 1.0 / samples.len() as f64;
    let mut total = vec![0.0f64; params.len()];
    let mut loss_sum = 0.0;
    for (l, g) in &per_chunk {
        loss_sum += l;
        for (t, gv) in total.iter_mut().zip(g) {
            *t += gv;
        }
    }
    for t in &mut total {
        *t *= inv_b;
    }
    (loss_sum, total)
}

/// Mean loss of the network on a dataset (no gradient).
pub fn evaluate_mean_loss(
    net: &Network,
    params: &ParameterSet,
    data: &LabeledDataset,
    loss: &LossConfig,
) -> Result<f64> {
    let batch = predict(net, params, data)?;
    losses::mean_loss(&batch, loss)
}

/// Train for `stop_epoch` epochs of seeded mini-batch SGD-with-Adam,
/// optionally evaluating a held-out set after every epoch.
pub fn train_with_validation(
    net: &Network,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    stop_epoch: usize,
    validation: Option<&LabeledDataset>,
) -> Result<TrainRun> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if stop_epoch > cfg.max_epochs {
        return Err(Error::invalid(format!(
            "stop_epoch {stop_epoch} exceeds max_epochs {}",
            cfg.max_epochs
        )));
    }
    if data.num_classes() != net.classes() {
        return Err(Error::invalid(format!(
            "dataset has {} classes, network expects {}",
            data.num_classes(),
            net.classes()
        )));
    }
    let tensors = dataset_tensors(net, data)?;
    let labels = data.labels();

    let mut params = net.init_params(child_seed(cfg.seed, "init", 0));
    let mut state = AdamState::new(params.len());
    let mut train_history = Vec::with_capacity(stop_epoch);
    let mut val_history = Vec::with_capacity(stop_epoch);

    let n = tensors.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..stop_epoch {
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, "shuffle", epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk
                .iter()
                .map(|&i| (tensors[i].as_slice(), labels[i]))
                .collect();
            let (loss_sum, grads) = batch_gradient(net, &params, &batch, &cfg.loss);
            epoch_loss += loss_sum;
            adam_step(&mut params, &grads, &mut state, cfg)?;
        }
        train_history.push(epoch_loss / n as f64);
        if let Some(val) = validation {
            val_history.push(evaluate_mean_loss(net, &params, val, &cfg.loss)?);
        }
    }
    Ok(TrainRun {
        params,
        train_history,
        val_history,
    })
}

/// Train for `stop_epoch` epochs; returns the final parameters and the
/// per-epoch mean training loss.
pub fn train(
    net: &Network,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    stop_epoch: usize,
) -> Result<(ParameterSet, Vec<f64>)> {
    let run = train_with_validation(net, data, cfg, stop_epoch, None)?;
    Ok((run.params, run.train_history))
}
