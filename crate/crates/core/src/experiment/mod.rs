//! Experiment orchestration: build a class distribution, split it, select
//! hyperparameters by cross-validation, retrain, and evaluate — once per
//! method, optionally over a schedule of distributions.

mod cv;
mod report;
mod run;
mod split;

pub use cv::{cross_validate, CvOutcome};
pub use report::{render_improvement_table, render_summary_table};
pub use run::{build_distribution, run_experiment, write_outputs, ResultRow};
pub use split::{split_dataset, stratified_folds};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::synthgen::SynthConfig;

/// Where the experiment's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Generate synthetic cells.
    Synth(SynthConfig),
    /// Load a class-per-subdirectory layout written by the `synth` command.
    Dir { dir: PathBuf, classes: usize },
}

/// One imbalance treatment to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CrossEntropy,
    Focal { alphas: Vec<f64>, gamma: f64 },
    UnderSampling,
    OverSampling,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::CrossEntropy => "cross_entropy",
            Method::Focal { .. } => "focal",
            Method::UnderSampling => "under_sampling",
            Method::OverSampling => "over_sampling",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Method::Focal { alphas, gamma } = self {
            if alphas.is_empty() {
                return Err(Error::invalid("focal method needs a non-empty alpha list"));
            }
            for &a in alphas {
                crate::losses::LossConfig::focal(a, *gamma).validate()?;
            }
        }
        Ok(())
    }
}

fn default_split() -> f64 {
    0.70
}

fn default_folds() -> usize {
    5
}

/// Full experiment description; serialises to/from the plan JSON consumed
/// by the command-line `run` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dataset: DatasetSource,
    /// Model identifier (`mini_res` or `mini_dense`).
    pub model: String,
    pub methods: Vec<Method>,
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub train: TrainConfig,
    /// Optional class-count triples to evaluate in sequence; when absent
    /// the generated dataset is used as-is.
    #[serde(default)]
    pub distribution_schedule: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub master_seed: u64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::invalid("split_fraction must lie in (0, 1)"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds must be at least 2"));
        }
        if self.folds > 255 || self.methods.len() > 255 {
            return Err(Error::invalid("too many folds or methods"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("plan lists no methods"));
        }
        for m in &self.methods {
            m.validate()?;
            if let Method::Focal { alphas, .. } = m {
                if alphas.len() > 255 {
                    return Err(Error::invalid("too many alpha candidates"));
                }
            }
        }
        self.train.validate()?;
        if let Some(schedule) = &self.distribution_schedule {
            if schedule.is_empty() {
                return Err(Error::invalid("distribution_schedule must not be empty"));
            }
        }
        match &self.dataset {
            DatasetSource::Synth(cfg) => cfg.validate()?,
            DatasetSource::Dir { classes, .. } => {
                if *classes < 2 {
                    return Err(Error::invalid("dataset needs at least 2 classes"));
                }
            }
        }
        Ok(())
    }
}
