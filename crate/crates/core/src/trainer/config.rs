use serde::{Deserialize, Serialize};

use crate::clustering::CentroidMode;
use crate::mlp::Activation;
use crate::ssl::{SslLossConfig, SslMethod};

/// Backbone and clustering-module shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layer widths of the feature extractor.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Feature dimension d fed to the clustering module.
    pub embed_dim: usize,
    /// Number of clusters K; equals the number of classes.
    pub clusters: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![10, 10, 10],
            activation: Activation::Relu,
            embed_dim: 2,
            clusters: 2,
        }
    }
}

impl ModelConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.hidden.contains(&0) {
            v.push("model.hidden widths must be positive".into());
        }
        if self.embed_dim == 0 {
            v.push("model.embed_dim must be >= 1".into());
        }
        if self.clusters < 2 {
            v.push(format!("model.clusters must be >= 2, got {}", self.clusters));
        }
        v
    }
}

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight β of the clustering loss.
    pub beta: f64,
    /// Weight δ of the base-model loss.
    pub delta: f64,
    /// Dirichlet concentration, broadcast to every cluster.
    pub alpha: f64,
    pub lr: f64,
    pub iterations: usize,
    /// Step index from which the learning rate is multiplied by `decay_factor`.
    pub decay_at: usize,
    pub decay_factor: f64,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    /// Std of the Gaussian input noise added to every batch.
    pub augment_noise: f64,
    /// Fraction of the run after which weights enter the running average.
    pub swa_start_fraction: f64,
    /// Validation cadence; 0 means `max(iterations / 50, 1)`.
    pub eval_every: usize,
    pub centroid_mode: CentroidMode,
    pub ssl: SslLossConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            delta: 0.0,
            alpha: 1.0,
            lr: 0.01,
            iterations: 3000,
            decay_at: 2400,
            decay_factor: 0.1,
            n_labeled: 32,
            n_unlabeled: 128,
            augment_noise: 0.0,
            swa_start_fraction: 0.8,
            eval_every: 0,
            centroid_mode: CentroidMode::ClassMean,
            ssl: SslLossConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn eval_interval(&self) -> usize {
        if self.eval_every > 0 {
            self.eval_every
        } else {
            (self.iterations / 50).max(1)
        }
    }

    /// Learning rate in effect at 0-based step `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step >= self.decay_at {
            self.lr * self.decay_factor
        } else {
            self.lr
        }
    }

    /// Number of leading steps excluded from weight averaging.
    pub fn swa_start(&self) -> usize {
        let start = (self.swa_start_fraction * self.iterations as f64).floor() as usize;
        start.min(self.iterations.saturating_sub(1))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.beta >= 0.0) {
            v.push(format!("train.beta must be >= 0, got {}", self.beta));
        }
        if !(self.delta >= 0.0) {
            v.push(format!("train.delta must be >= 0, got {}", self.delta));
        }
        if self.delta > 0.0 && self.ssl.method == SslMethod::None {
            v.push("train.delta > 0 requires train.ssl.method other than none".into());
        }
        if !(self.alpha >= 1.0) {
            v.push(format!("train.alpha must be >= 1, got {}", self.alpha));
        }
        if !(self.lr > 0.0) {
            v.push(format!("train.lr must be > 0, got {}", self.lr));
        }
        if self.decay_at > self.iterations {
            v.push(format!(
                "train.decay_at ({}) must not exceed train.iterations ({})",
                self.decay_at, self.iterations
            ));
        }
        if !(self.decay_factor > 0.0) {
            v.push(format!("train.decay_factor must be > 0, got {}", self.decay_factor));
        }
        if self.n_labeled == 0 {
            v.push("train.n_labeled must be >= 1".into());
        }
        if !(self.augment_noise >= 0.0) {
            v.push(format!("train.augment_noise must be >= 0, got {}", self.augment_noise));
        }
        if !(0.0..=1.0).contains(&self.swa_start_fraction) {
            v.push(format!(
                "train.swa_start_fraction must lie in [0, 1], got {}",
                self.swa_start_fraction
            ));
        }
        v.extend(self.ssl.violations().into_iter().map(|s| format!("train.{s}")));
        v
    }
}
