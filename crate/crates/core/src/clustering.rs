//! The clustering module: a one-layer autoencoder whose softmax encoder
//! yields cluster responsibilities Γ and whose decoder weights are the
//! centroids μ.
//!
//! The loss is the rephrased Gaussian-mixture Q-function
//!
//! ```text
//! L = 1/N [ Σ_i ‖x_i − x̄_i‖²
//!         + Σ_i Σ_k γ_ik (1 − γ_ik) ‖μ_k‖²
//!         − Σ_i Σ_{k≠l} γ_ik γ_il μ_kᵀμ_l
//!         + Σ_k (1 − α_k) log γ̃_k ]
//! ```
//!
//! with `x̄_i = Σ_k γ_ik μ_k` and `γ̃_k = mean_i γ_ik`. For rows of Γ that sum
//! to one, the first three terms equal `Σ_i Σ_k γ_ik ‖x_i − μ_k‖²`.
//!
//! Centroids never receive gradients here. In semi-supervised training they
//! follow a class-wise moving average of labeled features
//! ([`update_centroids`]); the unsupervised mode trains them with
//! [`centroid_grad`].

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::math::{linear_backward, linear_forward, softmax_backward, softmax_rows, DenseMatrix, PROB_EPS};
use crate::rng::SeededRng;

/// Encoder parameters, centroids and moving-average bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringModuleState {
    /// d x K
    pub encoder_weights: DenseMatrix,
    /// 1 x K
    pub encoder_bias: DenseMatrix,
    /// K x d, one centroid per row
    pub centroids: DenseMatrix,
    /// Number of centroid updates applied so far (the MA iteration `t`).
    pub ma_counter: u64,
    observed: Vec<bool>,
}

impl ClusteringModuleState {
    /// Encoder weights uniform in ±1/√d, zero bias, zero centroids.
    pub fn new(dim: usize, clusters: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        Self::from_parts(
            DenseMatrix::uniform(dim, clusters, -bound, bound, rng),
            DenseMatrix::zeros(1, clusters),
            DenseMatrix::zeros(clusters, dim),
        )
        .expect("consistent shapes")
    }

    pub fn from_parts(encoder_weights: DenseMatrix, encoder_bias: DenseMatrix, centroids: DenseMatrix) -> Result<Self> {
        let (d, k) = encoder_weights.shape();
        encoder_bias.ensure_shape("ClusteringModuleState", 1, k)?;
        centroids.ensure_shape("ClusteringModuleState", k, d)?;
        Ok(Self {
            encoder_weights,
            encoder_bias,
            centroids,
            ma_counter: 0,
            observed: vec![false; k],
        })
    }

    pub fn clusters(&self) -> usize {
        self.encoder_weights.cols()
    }

    pub fn dim(&self) -> usize {
        self.encoder_weights.rows()
    }

    /// Whether class `k` has contributed to its centroid yet.
    pub fn observed(&self, k: usize) -> bool {
        self.observed[k]
    }

    pub fn observed_flags(&self) -> &[bool] {
        &self.observed
    }

    /// Restores the moving-average bookkeeping, e.g. from a checkpoint.
    pub fn set_history(&mut self, ma_counter: u64, observed: Vec<bool>) -> Result<()> {
        if observed.len() != self.clusters() {
            return Err(shape_err(
                "set_history",
                format!("{} flags for {} clusters", observed.len(), self.clusters()),
            ));
        }
        self.ma_counter = ma_counter;
        self.observed = observed;
        Ok(())
    }

    pub fn logits(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        if features.cols() != self.dim() {
            return Err(shape_err(
                "encode",
                format!(
                    "features have {} columns, encoder expects {}",
                    features.cols(),
                    self.dim()
                ),
            ));
        }
        linear_forward(features, &self.encoder_weights, &self.encoder_bias)
    }
}

/// How the per-class batch statistic of the centroid update is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidMode {
    /// Divide the class-k feature sum by the number of class-k samples.
    #[default]
    ClassMean,
    /// Divide the class-k feature sum by the whole labeled batch size.
    Literal,
}

/// The four loss terms, each already scaled by 1/N.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CmLossBreakdown {
    pub reconstruction: f64,
    pub variance_penalty: f64,
    pub cross_centroid: f64,
    pub dirichlet: f64,
    pub total: f64,
}

/// Responsibilities Γ = softmax(XW + b).
pub fn encode(features: &DenseMatrix, state: &ClusteringModuleState) -> Result<DenseMatrix> {
    softmax_rows(&state.logits(features)?)
}

/// Decoder output X̄ = Γμ.
pub fn reconstruct(gamma: &DenseMatrix, centroids: &DenseMatrix) -> Result<DenseMatrix> {
    if gamma.cols() != centroids.rows() {
        return Err(shape_err(
            "reconstruct",
            format!("{} responsibilities for {} centroids", gamma.cols(), centroids.rows()),
        ));
    }
    gamma.matmul(centroids)
}

fn check_loss_inputs(x: &DenseMatrix, gamma: &DenseMatrix, centroids: &DenseMatrix, alpha: &[f64]) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput("cm_loss"));
    }
    let (n, k, d) = (x.rows(), centroids.rows(), x.cols());
    gamma.ensure_shape("cm_loss", n, k)?;
    centroids.ensure_shape("cm_loss", k, d)?;
    if alpha.len() != k {
        return Err(shape_err(
            "cm_loss",
            format!("{} alpha entries for {k} clusters", alpha.len()),
        ));
    }
    if let Some(a) = alpha.iter().find(|&&a| !(a >= 1.0)) {
        return Err(Error::Argument(format!(
            "Dirichlet concentration must be >= 1, got {a}"
        )));
    }
    Ok(())
}

fn mean_responsibility(gamma: &DenseMatrix) -> Vec<f64> {
    let n = gamma.rows() as f64;
    gamma.col_sums().as_slice().iter().map(|s| s / n).collect()
}

/// Evaluates the clustering loss term by term.
pub fn cm_loss(
    x: &DenseMatrix,
    gamma: &DenseMatrix,
    x_bar: &DenseMatrix,
    centroids: &DenseMatrix,
    alpha: &[f64],
) -> Result<CmLossBreakdown> {
    check_loss_inputs(x, gamma, centroids, alpha)?;
    x_bar.ensure_shape("cm_loss", x.rows(), x.cols())?;
    let n = x.rows() as f64;
    let k = centroids.rows();
    let gram = centroids.matmul_t(centroids)?;

    let mut recon = 0.0;
    let mut var = 0.0;
    let mut cross = 0.0;
    for i in 0..x.rows() {
        recon += x
            .row(i)
            .iter()
            .zip(x_bar.row(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        let g = gamma.row(i);
        for a in 0..k {
            var += g[a] * (1.0 - g[a]) * gram[(a, a)];
            for b in 0..k {
                if a != b {
                    cross += g[a] * g[b] * gram[(a, b)];
                }
            }
        }
    }
    let dirichlet: f64 = mean_responsibility(gamma)
        .iter()
        .zip(alpha)
        .map(|(&m, &a)| (1.0 - a) * m.max(PROB_EPS).ln())
        .sum();

    let out = CmLossBreakdown {
        reconstruction: recon / n,
        variance_penalty: var / n,
        cross_centroid: -cross / n,
        dirichlet: dirichlet / n,
        total: 0.0,
    };
    Ok(CmLossBreakdown {
        total: out.reconstruction + out.variance_penalty + out.cross_centroid + out.dirichlet,
        ..out
    })
}

/// Partial derivatives of the loss with X̄ = Γμ substituted, treating Γ as
/// free variables: returns `(∂L/∂Γ, ∂L/∂X)` where `∂L/∂X` is the direct
/// path through the reconstruction term only.
pub fn cm_loss_partials(
    x: &DenseMatrix,
    gamma: &DenseMatrix,
    centroids: &DenseMatrix,
    alpha: &[f64],
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_loss_inputs(x, gamma, centroids, alpha)?;
    let n = x.rows() as f64;
    let k = centroids.rows();
    let gram = centroids.matmul_t(centroids)?;
    let residual = x.sub(&reconstruct(gamma, centroids)?)?;
    // residual_i · μ_k
    let proj = residual.matmul_t(centroids)?;
    let mean = mean_responsibility(gamma);

    let mut d_gamma = DenseMatrix::zeros(x.rows(), k);
    for i in 0..x.rows() {
        let g = gamma.row(i);
        for a in 0..k {
            let cross: f64 = (0..k).filter(|&b| b != a).map(|b| g[b] * gram[(a, b)]).sum();
            let mut v = -2.0 * proj[(i, a)] + gram[(a, a)] * (1.0 - 2.0 * g[a]) - 2.0 * cross;
            if alpha[a] != 1.0 && mean[a] >= PROB_EPS {
                v += (1.0 - alpha[a]) / (mean[a] * n);
            }
            d_gamma[(i, a)] = v / n;
        }
    }
    Ok((d_gamma, residual.scale(2.0 / n)))
}

/// Gradients of the loss w.r.t. inputs and encoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CmGradients {
    pub features: DenseMatrix,
    pub encoder_weights: DenseMatrix,
    pub encoder_bias: DenseMatrix,
    pub logits: DenseMatrix,
}

/// Backward pass through the encoder softmax for given responsibilities.
/// Centroids enter as constants.
pub fn cm_backward(
    x: &DenseMatrix,
    gamma: &DenseMatrix,
    state: &ClusteringModuleState,
    alpha: &[f64],
) -> Result<CmGradients> {
    let (d_gamma, d_x_direct) = cm_loss_partials(x, gamma, &state.centroids, alpha)?;
    let d_logits = softmax_backward(gamma, &d_gamma)?;
    let (d_x, d_w, d_b) = linear_backward(x, &state.encoder_weights, &d_logits)?;
    Ok(CmGradients {
        features: d_x.add(&d_x_direct)?,
        encoder_weights: d_w,
        encoder_bias: d_b,
        logits: d_logits,
    })
}

/// Loss and gradients for features `x` under the current state.
pub fn cm_loss_grads(
    x: &DenseMatrix,
    state: &ClusteringModuleState,
    alpha: &[f64],
) -> Result<(CmLossBreakdown, CmGradients)> {
    let gamma = encode(x, state)?;
    let x_bar = reconstruct(&gamma, &state.centroids)?;
    let loss = cm_loss(x, &gamma, &x_bar, &state.centroids, alpha)?;
    Ok((loss, cm_backward(x, &gamma, state, alpha)?))
}

/// Gradient w.r.t. the centroids, for the unsupervised mode where the
/// decoder is trained by gradient descent.
pub fn centroid_grad(x: &DenseMatrix, gamma: &DenseMatrix, centroids: &DenseMatrix) -> Result<DenseMatrix> {
    let alpha = vec![1.0; centroids.rows()];
    check_loss_inputs(x, gamma, centroids, &alpha)?;
    let n = x.rows() as f64;
    let k = centroids.rows();
    let residual = x.sub(&reconstruct(gamma, centroids)?)?;
    // reconstruction: −2 Γᵀ R ; variance: 2 diag(Σ_i γ(1−γ)) μ ; cross: −2 Σ_{l≠k} (ΓᵀΓ)_kl μ_l
    let mut grad = gamma.t_matmul(&residual)?.scale(-2.0);
    let co = gamma.t_matmul(gamma)?;
    let mut var_w = vec![0.0; k];
    for g in gamma.row_iter() {
        for a in 0..k {
            var_w[a] += g[a] * (1.0 - g[a]);
        }
    }
    for a in 0..k {
        for (j, out) in grad.row_mut(a).iter_mut().enumerate() {
            let mut v = 2.0 * var_w[a] * centroids[(a, j)];
            for b in 0..k {
                if b != a {
                    v -= 2.0 * co[(a, b)] * centroids[(b, j)];
                }
            }
            *out += v;
        }
    }
    Ok(grad.scale(1.0 / n))
}

/// Class-wise moving-average update of the centroids from labeled features.
///
/// The counter `t` advances once per call. Each class present in the batch
/// moves to `((t−1)/t)·μ_k + (1/t)·m_k`; absent classes are left alone. A
/// class seen for the first time takes `m_k` outright.
pub fn update_centroids(
    state: &mut ClusteringModuleState,
    features: &DenseMatrix,
    labels: &[usize],
    mode: CentroidMode,
) -> Result<()> {
    let k = state.clusters();
    if labels.is_empty() {
        return Err(Error::EmptyInput("update_centroids"));
    }
    if labels.len() != features.rows() {
        return Err(shape_err(
            "update_centroids",
            format!("{} labels for {} rows", labels.len(), features.rows()),
        ));
    }
    if features.cols() != state.dim() {
        return Err(shape_err(
            "update_centroids",
            format!("features have {} columns, centroids {}", features.cols(), state.dim()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Index {
            op: "update_centroids",
            index: bad,
            bound: k,
        });
    }

    let mut sums = DenseMatrix::zeros(k, state.dim());
    let mut counts = vec![0usize; k];
    for (row, &y) in features.row_iter().zip(labels) {
        counts[y] += 1;
        for (s, v) in sums.row_mut(y).iter_mut().zip(row) {
            *s += v;
        }
    }

    state.ma_counter += 1;
    let t = state.ma_counter as f64;
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        let denom = match mode {
            CentroidMode::ClassMean => counts[c] as f64,
            CentroidMode::Literal => labels.len() as f64,
        };
        let (keep, take) = if state.observed[c] {
            ((t - 1.0) / t, 1.0 / t)
        } else {
            (0.0, 1.0)
        };
        state.observed[c] = true;
        let stat = sums.row(c).to_vec();
        for (mu, s) in state.centroids.row_mut(c).iter_mut().zip(stat) {
            *mu = keep * *mu + take * (s / denom);
        }
    }
    Ok(())
}

/// Squared distance of each row to each centroid.
pub fn squared_distances(x: &DenseMatrix, centroids: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(x.rows(), centroids.rows());
    for (i, row) in x.row_iter().enumerate() {
        for (k, mu) in centroids.row_iter().enumerate() {
            out[(i, k)] = row.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    out
}
