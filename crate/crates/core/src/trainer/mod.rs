//! Semi-supervised training with the clustering module.
//!
//! Each step runs in this order:
//!
//! 1. labeled and unlabeled inputs go through the feature extractor;
//! 2. the centroids take a moving-average step from the labeled features;
//! 3. all features are encoded to responsibilities Γ and reconstructed;
//! 4. the loss `CE(Γ_l, y) + β·L_CM + δ·L_SSL` is evaluated;
//! 5. gradients flow into the encoder and the extractor, never the centroids;
//! 6. Adam updates the parameters.

mod config;
mod record;
mod swa;
mod unsupervised;

pub use config::{ModelConfig, TrainConfig};
pub use record::{EvalRecord, RunRecord, StepRecord, RUN_CSV_HEADER};
pub use swa::SwaAverage;
pub use unsupervised::{fit_clustering, ClusteringFit, ClusteringFitConfig};

use crate::clustering::{cm_loss, cm_loss_partials, reconstruct, update_centroids, ClusteringModuleState};
use crate::data::{sample_batch, Batch, Dataset, LabelSplit, Split};
use crate::error::{Error, Result};
use crate::math::{
    adam_step, cross_entropy, cross_entropy_logit_grad, linear_backward, softmax_backward, softmax_rows, AdamState,
    DenseMatrix,
};
use crate::mlp::MlpState;
use crate::rng::SeededRng;
use crate::ssl::{kl_logit_grad, pseudo_label_logit_grad, pseudo_label_loss, vat_loss, ProbModel, SslMethod};

/// Feature extractor followed by the clustering module.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub backbone: MlpState,
    pub cm: ClusteringModuleState,
}

impl Model {
    pub fn init(input_dim: usize, config: &ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(&config.hidden);
        widths.push(config.embed_dim);
        let backbone = MlpState::new(&widths, config.activation, rng)?;
        let cm = ClusteringModuleState::new(config.embed_dim, config.clusters, rng);
        Ok(Self { backbone, cm })
    }

    pub fn features(&self, inputs: &DenseMatrix) -> Result<DenseMatrix> {
        self.backbone.features(inputs)
    }

    pub fn predict(&self, inputs: &DenseMatrix) -> Result<Vec<usize>> {
        Ok(self.probs(inputs)?.argmax_rows())
    }

    /// Trainable tensors: extractor layers, then encoder weights and bias.
    pub fn params(&self) -> Vec<&DenseMatrix> {
        let mut p = self.backbone.params();
        p.push(&self.cm.encoder_weights);
        p.push(&self.cm.encoder_bias);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut p = self.backbone.params_mut();
        p.push(&mut self.cm.encoder_weights);
        p.push(&mut self.cm.encoder_bias);
        p
    }

    /// Copy of this model with its trainable tensors replaced.
    pub fn with_params(&self, params: Vec<DenseMatrix>) -> Result<Self> {
        let mut out = self.clone();
        let slots = out.params_mut();
        if slots.len() != params.len() {
            return Err(Error::Contract(format!(
                "{} tensors supplied for {} parameters",
                params.len(),
                slots.len()
            )));
        }
        for (slot, p) in slots.into_iter().zip(params) {
            if slot.shape() != p.shape() {
                return Err(Error::Contract("parameter shape changed".into()));
            }
            *slot = p;
        }
        Ok(out)
    }

    /// Gradient of a logit-space loss on `inputs` w.r.t. every parameter
    /// and the inputs.
    fn backprop_logits(&self, inputs: &DenseMatrix, d_logits: &DenseMatrix) -> Result<(Vec<DenseMatrix>, DenseMatrix)> {
        let (feat, cache) = self.backbone.forward(inputs)?;
        let (d_feat, d_w, d_b) = linear_backward(&feat, &self.cm.encoder_weights, d_logits)?;
        let g = self.backbone.backward(&d_feat, &cache)?;
        let input = g.input.clone();
        let mut grads = g.into_params();
        grads.push(d_w);
        grads.push(d_b);
        Ok((grads, input))
    }
}

impl ProbModel for Model {
    fn probs(&self, inputs: &DenseMatrix) -> Result<DenseMatrix> {
        softmax_rows(&self.cm.logits(&self.features(inputs)?)?)
    }

    fn input_grad(&self, inputs: &DenseMatrix, d_logits: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.backprop_logits(inputs, d_logits)?.1)
    }
}

/// Model plus optimizer state for one run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState,
}

impl TrainState {
    pub fn new(model: Model) -> Self {
        let adam = AdamState::for_params(&model.params());
        Self { model, adam }
    }
}

fn add_rows(dst: &mut DenseMatrix, offset: usize, src: &DenseMatrix, scale: f64) {
    for i in 0..src.rows() {
        for (d, s) in dst.row_mut(offset + i).iter_mut().zip(src.row(i)) {
            *d += scale * s;
        }
    }
}

/// One optimization step on `batch` at learning rate `lr`.
pub fn train_step(
    state: &mut TrainState,
    batch: &Batch,
    config: &TrainConfig,
    lr: f64,
    iter: usize,
    rng: &mut SeededRng,
) -> Result<StepRecord> {
    let (record, grads) = step_gradients(&mut state.model, batch, config, lr, iter, rng)?;
    adam_step(&mut state.model.params_mut(), &grads, &mut state.adam, lr)?;
    Ok(record)
}

/// A step whose numbers stopped being finite before a loss was formed.
fn diverged(iter: usize, lr: f64) -> Error {
    Error::NonFiniteLoss {
        iteration: iter,
        record: Box::new(StepRecord {
            iter,
            ce: f64::NAN,
            cm: Default::default(),
            ssl: f64::NAN,
            total: f64::NAN,
            lr,
        }),
    }
}

/// Steps 1-5 of a training step: updates the centroids in `model`, then
/// returns the logged losses and the gradient of the total loss with respect
/// to [`Model::params`], the centroids held constant.
pub fn step_gradients(
    model: &mut Model,
    batch: &Batch,
    config: &TrainConfig,
    lr: f64,
    iter: usize,
    rng: &mut SeededRng,
) -> Result<(StepRecord, Vec<DenseMatrix>)> {
    let n_l = batch.n_labeled();
    let n_u = batch.n_unlabeled();
    if n_l == 0 {
        return Err(Error::Contract("batch has no labeled samples".into()));
    }
    let clusters = model.cm.clusters();
    let alpha = vec![config.alpha; clusters];

    // (1) features for labeled rows first, then unlabeled
    let inputs = DenseMatrix::vstack(&batch.labeled, &batch.unlabeled)?;
    let (feat, cache) = model.backbone.forward(&inputs)?;
    let diverged = || diverged(iter, lr);
    if !feat.is_finite() {
        return Err(diverged());
    }

    // (2) centroids follow the labeled features as constants
    update_centroids(
        &mut model.cm,
        &feat.slice_rows(0, n_l),
        &batch.labels,
        config.centroid_mode,
    )?;

    // (3) responsibilities and reconstructions
    let logits = model.cm.logits(&feat)?;
    if !logits.is_finite() {
        return Err(diverged());
    }
    let gamma = softmax_rows(&logits)?;
    let x_bar = reconstruct(&gamma, &model.cm.centroids)?;

    // (4) losses
    let gamma_l = gamma.slice_rows(0, n_l);
    let ce = cross_entropy(&gamma_l, &batch.labels)?;
    let cm = cm_loss(&feat, &gamma, &x_bar, &model.cm.centroids, &alpha)?;
    let use_ssl = config.delta != 0.0 && n_u > 0;
    let mut ssl = 0.0;
    let mut vat_adv = None;
    if n_u > 0 {
        match config.ssl.method {
            SslMethod::None => {}
            SslMethod::PseudoLabel => ssl = pseudo_label_loss(&gamma.slice_rows(n_l, n_l + n_u), &config.ssl),
            SslMethod::Vat if use_ssl => {
                let out = vat_loss(&batch.unlabeled, &*model, &config.ssl, rng)?;
                ssl = out.loss;
                vat_adv = Some((batch.unlabeled.add(&out.perturbation)?, out.clean_probs));
            }
            // not needed for the gradient; skip the extra forward passes
            SslMethod::Vat => {}
        }
    }
    let total = ce + config.beta * cm.total + config.delta * ssl;
    let record = StepRecord {
        iter,
        ce,
        cm,
        ssl,
        total,
        lr,
    };
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration: iter,
            record: Box::new(record),
        });
    }

    // (5) backward
    let mut d_logits = DenseMatrix::zeros(n_l + n_u, clusters);
    add_rows(
        &mut d_logits,
        0,
        &cross_entropy_logit_grad(&gamma_l, &batch.labels)?,
        1.0,
    );
    let mut d_feat_direct = None;
    if config.beta != 0.0 {
        let (d_gamma, d_x) = cm_loss_partials(&feat, &gamma, &model.cm.centroids, &alpha)?;
        let d_z = softmax_backward(&gamma, &d_gamma)?;
        d_logits.add_scaled(&d_z, config.beta)?;
        d_feat_direct = Some(d_x.scale(config.beta));
    }
    if use_ssl && config.ssl.method == SslMethod::PseudoLabel {
        let g = pseudo_label_logit_grad(&gamma.slice_rows(n_l, n_l + n_u), &config.ssl);
        add_rows(&mut d_logits, n_l, &g, config.delta);
    }
    let (mut d_feat, d_w, d_b) = linear_backward(&feat, &model.cm.encoder_weights, &d_logits)?;
    if let Some(d) = d_feat_direct {
        d_feat = d_feat.add(&d)?;
    }
    let mut grads = model.backbone.backward(&d_feat, &cache)?.into_params();
    grads.push(d_w);
    grads.push(d_b);

    if let Some((adv_inputs, clean)) = vat_adv {
        let q = model.probs(&adv_inputs)?;
        let d_z = kl_logit_grad(&clean, &q)?.scale(config.delta);
        let (vat_grads, _) = model.backprop_logits(&adv_inputs, &d_z)?;
        for (g, v) in grads.iter_mut().zip(&vat_grads) {
            g.add_scaled(v, 1.0)?;
        }
    }

    Ok((record, grads))
}

/// Top-1 accuracy of argmax-Γ predictions; ties go to the lowest class.
pub fn evaluate(model: &Model, features: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("evaluate"));
    }
    let pred = model.predict(features)?;
    Ok(accuracy(&pred, labels))
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub record: RunRecord,
    /// Parameters after the last step.
    pub last: Model,
    /// Weight-averaged model used for the final test accuracy.
    pub averaged: Model,
}

/// Stream keys for the per-run generators.
const INIT_STREAM: u64 = 0;
const BATCH_STREAM: u64 = 1;
const SSL_STREAM: u64 = 2;

/// Initial model for `config.seed`, as used by [`train`].
pub fn initial_model(dataset: &Dataset, model: &ModelConfig, config: &TrainConfig) -> Result<Model> {
    let mut rng = SeededRng::new(config.seed).derive(INIT_STREAM);
    Model::init(dataset.input_dim(), model, &mut rng)
}

/// Generators for batch sampling and base-model noise for `seed`.
pub fn run_streams(seed: u64) -> (SeededRng, SeededRng) {
    let root = SeededRng::new(seed);
    (root.derive(BATCH_STREAM), root.derive(SSL_STREAM))
}

/// Full training run.
pub fn train(dataset: &Dataset, pools: &LabelSplit, model: &ModelConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    let problems: Vec<String> = model.violations().into_iter().chain(config.violations()).collect();
    if !problems.is_empty() {
        return Err(Error::Argument(problems.join("; ")));
    }
    if model.clusters != dataset.classes {
        return Err(Error::Argument(format!(
            "model has {} clusters for {} classes",
            model.clusters, dataset.classes
        )));
    }
    let mut state = TrainState::new(initial_model(dataset, model, config)?);
    let (mut batch_rng, mut ssl_rng) = run_streams(config.seed);
    let (val_x, val_y) = dataset.subset(Split::Validation);
    let (test_x, test_y) = dataset.subset(Split::Test);
    let n_u = if pools.unlabeled.is_empty() {
        0
    } else {
        config.n_unlabeled
    };

    let mut record = RunRecord::default();
    let mut swa = SwaAverage::new();
    let swa_start = config.swa_start();
    let every = config.eval_interval();
    let mut best: Option<(f64, usize, f64)> = None;

    let mut consider = |model: &Model, iter: usize, record: &mut RunRecord| -> Result<()> {
        if val_y.is_empty() {
            return Ok(());
        }
        let acc = evaluate(model, &val_x, &val_y)?;
        record.evals.push(EvalRecord {
            iter,
            split: Split::Validation,
            accuracy: acc,
        });
        if best.is_none_or(|(b, _, _)| acc > b) {
            let test = if test_y.is_empty() {
                0.0
            } else {
                evaluate(model, &test_x, &test_y)?
            };
            best = Some((acc, iter, test));
        }
        Ok(())
    };

    for step in 0..config.iterations {
        let batch = sample_batch(
            dataset,
            pools,
            config.n_labeled,
            n_u,
            config.augment_noise,
            &mut batch_rng,
        )?;
        let lr = config.lr_at(step);
        // overflow caught inside a numeric kernel is divergence too
        let blown = |e: Error| match e {
            Error::Evaluation(_) => diverged(step, lr),
            e => e,
        };
        let rec = train_step(&mut state, &batch, config, lr, step, &mut ssl_rng).map_err(blown)?;
        record.steps.push(rec);

        if step >= swa_start {
            swa.add(&state.model.params())?;
        }
        let done = step + 1;
        if done % every == 0 || done == config.iterations {
            if swa.count() > 0 {
                let avg = state.model.with_params(swa.average()?)?;
                consider(&avg, done, &mut record).map_err(blown)?;
            } else {
                consider(&state.model, done, &mut record).map_err(blown)?;
            }
        }
    }

    let averaged = if swa.count() > 0 {
        state.model.with_params(swa.average()?)?
    } else {
        state.model.clone()
    };
    if !test_y.is_empty() {
        record.final_test_acc = evaluate(&averaged, &test_x, &test_y).map_err(|e| match e {
            Error::Evaluation(_) => diverged(config.iterations, config.lr_at(config.iterations.saturating_sub(1))),
            e => e,
        })?;
    }
    if let Some((acc, iter, test)) = best {
        record.best_val_acc = acc;
        record.best_val_iter = iter;
        record.selected_test_acc = test;
    }
    Ok(TrainOutcome {
        record,
        last: state.model,
        averaged,
    })
}
