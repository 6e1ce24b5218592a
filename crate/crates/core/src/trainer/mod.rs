//! Desk-scale training of a sparsely activated MLP from an EoC initialization.
//!
//! Samples are normalized to mean 0 and variance `q*`, the network is drawn by
//! [`Mlp::new`], and plain minibatch SGD minimizes the softmax cross-entropy.
//! A non-finite loss stops training and sets the divergence flag; the partial
//! report is still returned.

mod data;
mod mlp;

pub use data::{one_hot, read_digits_csv, synthetic_blobs, Dataset, DatasetSpec, Splits, DIGIT_PIXELS};
pub use mlp::{cross_entropy, softmax, ForwardPass, Gradients, Mlp};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EocError, Result};
use crate::solver::EocInit;

/// Number of training samples used to measure sparsity at initialization.
const SPARSITY_PROBE: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub init: EocInit,
    pub depth: usize,
    pub width: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub dataset: DatasetSpec,
    /// Seed for dataset synthesis and the train/val/test split, kept apart from
    /// `seed` so that several initializations can share one dataset.
    #[serde(default)]
    pub data_seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.batch == 0 {
            return Err(EocError::Config(
                "depth, width and batch must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(EocError::domain("lr", self.lr, "must be positive"));
        }
        self.init.spec.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Total SGD steps taken at the end of this epoch.
    pub step: usize,
    /// Mean training loss over the epoch's steps.
    pub loss: f64,
    pub val_acc: f64,
    /// Fraction of zero hidden activations on the validation set.
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub step_losses: Vec<f64>,
    pub test_accuracy: f64,
    /// Hidden-activation sparsity of the freshly drawn network.
    pub init_sparsity: f64,
    /// Hidden-activation sparsity of the final network on the test set.
    pub final_sparsity: f64,
    pub diverged: bool,
}

impl TrainReport {
    /// Steps until the running mean of the last `window` step losses first
    /// drops to `threshold`.
    pub fn steps_to_loss(&self, threshold: f64, window: usize) -> Option<usize> {
        steps_to_loss(&self.step_losses, threshold, window)
    }

    /// Epochs until the epoch-mean training loss first drops to `threshold`.
    pub fn epochs_to_loss(&self, threshold: f64) -> Option<usize> {
        self.epochs.iter().find(|e| e.loss <= threshold).map(|e| e.epoch)
    }
}

pub fn steps_to_loss(losses: &[f64], threshold: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    let mut sum = 0.0;
    for (i, &l) in losses.iter().enumerate() {
        sum += l;
        if i >= window {
            sum -= losses[i - window];
        }
        let n = (i + 1).min(window) as f64;
        if i + 1 >= window && sum / n <= threshold {
            return Some(i + 1);
        }
    }
    None
}

pub fn prepare_data(config: &TrainConfig) -> Result<Splits> {
    let mut data = config.dataset.load(config.data_seed)?;
    data.normalize_samples(config.init.q_star);
    data.split(config.data_seed)
}

pub fn train(config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let splits = prepare_data(config)?;
    train_on(config, &splits)
}

/// [`train`] on already prepared data.
pub fn train_on(config: &TrainConfig, splits: &Splits) -> Result<TrainReport> {
    config.validate()?;
    let (train, val, test) = (&splits.train, &splits.val, &splits.test);
    let mut net = Mlp::new(
        &config.init,
        train.dim(),
        config.depth,
        config.width,
        train.classes,
        config.seed,
    );
    let probe: Vec<usize> = (0..train.len().min(SPARSITY_PROBE)).collect();
    let init_sparsity = net.activation_sparsity(train.select(&probe).x.view());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step_losses = Vec::new();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut diverged = false;

    'outer: for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let start = step_losses.len();
        for chunk in order.chunks(config.batch) {
            let batch = train.select(chunk);
            let (loss, grads) = net.loss_and_grad(batch.x.view(), &batch.y);
            step_losses.push(loss);
            if !loss.is_finite() {
                diverged = true;
                break 'outer;
            }
            net.apply(&grads, config.lr);
        }
        let done = &step_losses[start..];
        epochs.push(EpochLog {
            epoch,
            step: step_losses.len(),
            loss: done.iter().sum::<f64>() / done.len() as f64,
            val_acc: net.accuracy(val.x.view(), &val.y),
            sparsity: net.activation_sparsity(val.x.view()),
        });
    }

    Ok(TrainReport {
        epochs,
        step_losses,
        test_accuracy: net.accuracy(test.x.view(), &test.y),
        init_sparsity,
        final_sparsity: net.activation_sparsity(test.x.view()),
        diverged,
    })
}

/// Trains one run per seed on a shared dataset, in parallel.
pub fn train_seeds(config: &TrainConfig, seeds: &[u64]) -> Result<Vec<TrainReport>> {
    let splits = prepare_data(config)?;
    seeds
        .par_iter()
        .map(|&seed| train_on(&TrainConfig { seed, ..config.clone() }, &splits))
        .collect()
}

/// Mean and median of a sample; both are reported for multi-seed sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub count: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Some(Summary {
        mean: sorted.iter().sum::<f64>() / n as f64,
        median,
        count: n,
    })
}
