//! Base-model losses for unlabeled data: pseudo-labeling and virtual
//! adversarial training.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::math::{clamped_ln, DenseMatrix};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SslMethod {
    #[default]
    None,
    PseudoLabel,
    Vat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SslLossConfig {
    pub method: SslMethod,
    /// Confidence threshold τ for pseudo-labels.
    pub pl_threshold: f64,
    /// Radius ε of the adversarial perturbation.
    pub vat_epsilon: f64,
    /// Probe scale ξ for the power iteration.
    pub vat_xi: f64,
    pub vat_power_iters: usize,
}

impl Default for SslLossConfig {
    fn default() -> Self {
        Self {
            method: SslMethod::None,
            pl_threshold: 0.95,
            vat_epsilon: 1.0,
            vat_xi: 1e-6,
            vat_power_iters: 1,
        }
    }
}

impl SslLossConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.pl_threshold > 0.0 && self.pl_threshold < 1.0) {
            v.push(format!(
                "ssl.pl_threshold must lie in (0, 1), got {}",
                self.pl_threshold
            ));
        }
        if !(self.vat_epsilon > 0.0) {
            v.push(format!("ssl.vat_epsilon must be > 0, got {}", self.vat_epsilon));
        }
        if !(self.vat_xi > 0.0) {
            v.push(format!("ssl.vat_xi must be > 0, got {}", self.vat_xi));
        }
        if self.vat_power_iters == 0 {
            v.push("ssl.vat_power_iters must be >= 1".into());
        }
        v
    }
}

fn confident_rows(probs: &DenseMatrix, threshold: f64) -> Vec<(usize, usize)> {
    probs
        .argmax_rows()
        .into_iter()
        .enumerate()
        .filter(|&(i, k)| probs[(i, k)] >= threshold)
        .collect()
}

/// Summed cross-entropy of confident rows against their own argmax.
pub fn pseudo_label_loss_sum(probs: &DenseMatrix, threshold: f64) -> f64 {
    confident_rows(probs, threshold)
        .into_iter()
        .map(|(i, k)| -clamped_ln(probs[(i, k)]))
        .sum()
}

/// Mean cross-entropy over rows whose top probability reaches `threshold`;
/// zero when no row qualifies.
pub fn pseudo_label_loss(probs: &DenseMatrix, config: &SslLossConfig) -> f64 {
    let selected = confident_rows(probs, config.pl_threshold).len();
    if selected == 0 {
        return 0.0;
    }
    pseudo_label_loss_sum(probs, config.pl_threshold) / selected as f64
}

/// Gradient of [`pseudo_label_loss`] w.r.t. the logits behind `probs`, with
/// the pseudo-labels held fixed.
pub fn pseudo_label_logit_grad(probs: &DenseMatrix, config: &SslLossConfig) -> DenseMatrix {
    let rows = confident_rows(probs, config.pl_threshold);
    let mut grad = DenseMatrix::zeros(probs.rows(), probs.cols());
    let n = rows.len() as f64;
    for (i, k) in rows {
        for (g, &p) in grad.row_mut(i).iter_mut().zip(probs.row(i)) {
            *g = p / n;
        }
        grad[(i, k)] -= 1.0 / n;
    }
    grad
}

/// Mean over rows of KL(p_i ‖ q_i), logs clamped at 1e-12.
pub fn kl_divergence_rows(p: &DenseMatrix, q: &DenseMatrix) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(shape_err(
            "kl_divergence_rows",
            format!("{}x{} vs {}x{}", p.rows(), p.cols(), q.rows(), q.cols()),
        ));
    }
    if p.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (clamped_ln(a) - clamped_ln(b)))
        .sum();
    Ok(total / p.rows() as f64)
}

/// Gradient of `kl_divergence_rows(p, softmax(z))` w.r.t. `z`, `p` fixed.
pub fn kl_logit_grad(p: &DenseMatrix, q: &DenseMatrix) -> Result<DenseMatrix> {
    let n = p.rows().max(1) as f64;
    Ok(q.sub(p)?.scale(1.0 / n))
}

/// A differentiable classifier from inputs to class probabilities.
pub trait ProbModel {
    fn probs(&self, inputs: &DenseMatrix) -> Result<DenseMatrix>;

    /// Pulls a gradient w.r.t. the output logits back to the inputs.
    fn input_grad(&self, inputs: &DenseMatrix, d_logits: &DenseMatrix) -> Result<DenseMatrix>;
}

#[derive(Debug, Clone)]
pub struct VatOutcome {
    pub loss: f64,
    /// The perturbation r_adv, one row per sample, each of norm ε.
    pub perturbation: DenseMatrix,
    /// Model output on the clean inputs (held constant in the loss).
    pub clean_probs: DenseMatrix,
}

fn normalize_rows(m: &mut DenseMatrix, fallback: &DenseMatrix) {
    for i in 0..m.rows() {
        let norm = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            m.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        } else {
            m.row_mut(i).copy_from_slice(fallback.row(i));
        }
    }
}

fn random_unit_rows(rows: usize, cols: usize, rng: &mut SeededRng) -> Result<DenseMatrix> {
    let mut d = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        let mut done = false;
        for _ in 0..2 {
            let row: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                d.row_mut(i).iter_mut().zip(row).for_each(|(o, v)| *o = v / norm);
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::Evaluation("vat noise draw"));
        }
    }
    Ok(d)
}

/// Finds the adversarial direction by power iteration and returns the
/// perturbation `ε·r/‖r‖` together with the clean predictions.
///
/// Rows whose probe gradient vanishes keep their previous direction.
pub fn vat_perturbation(
    inputs: &DenseMatrix,
    model: &impl ProbModel,
    config: &SslLossConfig,
    rng: &mut SeededRng,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if !(config.vat_epsilon > 0.0 && config.vat_xi > 0.0) {
        return Err(Error::Argument("VAT needs positive epsilon and xi".into()));
    }
    let clean = model.probs(inputs)?;
    let mut dir = random_unit_rows(inputs.rows(), inputs.cols(), rng)?;
    for _ in 0..config.vat_power_iters.max(1) {
        let mut probe = inputs.clone();
        probe.add_scaled(&dir, config.vat_xi)?;
        let q = model.probs(&probe)?;
        let d_logits = kl_logit_grad(&clean, &q)?;
        let mut g = model.input_grad(&probe, &d_logits)?;
        normalize_rows(&mut g, &dir);
        dir = g;
    }
    Ok((dir.scale(config.vat_epsilon), clean))
}

/// Virtual adversarial loss `mean_i KL(p(x_i) ‖ p(x_i + r_adv,i))`.
pub fn vat_loss(
    inputs: &DenseMatrix,
    model: &impl ProbModel,
    config: &SslLossConfig,
    rng: &mut SeededRng,
) -> Result<VatOutcome> {
    let (perturbation, clean_probs) = vat_perturbation(inputs, model, config, rng)?;
    let adv = inputs.add(&perturbation)?;
    let loss = kl_divergence_rows(&clean_probs, &model.probs(&adv)?)?;
    Ok(VatOutcome {
        loss,
        perturbation,
        clean_probs,
    })
}
