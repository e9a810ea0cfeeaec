//! Clustering without labels: encoder and centroids trained jointly by
//! gradient descent on fixed features, with a Dirichlet prior on cluster
//! usage.

use crate::clustering::{
    centroid_grad, cm_backward, cm_loss, encode, reconstruct, ClusteringModuleState, CmLossBreakdown,
};
use crate::error::{Error, Result};
use crate::math::{adam_step, AdamState, DenseMatrix};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringFitConfig {
    pub clusters: usize,
    /// Dirichlet concentration (> 1 discourages empty clusters).
    pub alpha: f64,
    pub lr: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ClusteringFitConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            alpha: 2.0,
            lr: 0.05,
            iterations: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusteringFit {
    pub state: ClusteringModuleState,
    pub losses: Vec<CmLossBreakdown>,
}

impl ClusteringFit {
    /// Hard cluster assignment per row.
    pub fn assign(&self, features: &DenseMatrix) -> Result<Vec<usize>> {
        Ok(encode(features, &self.state)?.argmax_rows())
    }
}

/// k-means++ seeding: each further centroid is a row drawn with
/// probability proportional to its squared distance to the chosen ones.
fn seed_centroids(features: &DenseMatrix, k: usize, rng: &mut SeededRng) -> DenseMatrix {
    let n = features.rows();
    let mut chosen = vec![rng.index(n)];
    let mut dist: Vec<f64> = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let last = features.row(*chosen.last().expect("non-empty"));
        for (i, d) in dist.iter_mut().enumerate() {
            let sq: f64 = features.row(i).iter().zip(last).map(|(a, b)| (a - b) * (a - b)).sum();
            *d = d.min(sq);
        }
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.uniform(0.0, total);
            dist.iter()
                .position(|&d| {
                    target -= d;
                    target < 0.0
                })
                .unwrap_or(n - 1)
        } else {
            rng.index(n)
        };
        chosen.push(next);
    }
    features.select_rows(&chosen)
}

/// Full-batch fit of the clustering module to `features`, centroids seeded
/// with k-means++.
pub fn fit_clustering(features: &DenseMatrix, config: &ClusteringFitConfig) -> Result<ClusteringFit> {
    let k = config.clusters;
    if features.rows() < k {
        return Err(Error::Argument(format!("{} rows for {k} clusters", features.rows())));
    }
    let mut rng = SeededRng::new(config.seed);
    let mut state = ClusteringModuleState::new(features.cols(), k, &mut rng);
    state.centroids = seed_centroids(features, k, &mut rng);

    let alpha = vec![config.alpha; k];
    let mut adam = AdamState::for_params(&[&state.encoder_weights, &state.encoder_bias, &state.centroids]);
    let mut losses = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let gamma = encode(features, &state)?;
        let x_bar = reconstruct(&gamma, &state.centroids)?;
        let loss = cm_loss(features, &gamma, &x_bar, &state.centroids, &alpha)?;
        if !loss.total.is_finite() {
            return Err(Error::Evaluation("fit_clustering"));
        }
        losses.push(loss);
        let g = cm_backward(features, &gamma, &state, &alpha)?;
        let g_mu = centroid_grad(features, &gamma, &state.centroids)?;
        adam_step(
            &mut [
                &mut state.encoder_weights,
                &mut state.encoder_bias,
                &mut state.centroids,
            ],
            &[g.encoder_weights, g.encoder_bias, g_mu],
            &mut adam,
            config.lr,
        )?;
    }
    Ok(ClusteringFit { state, losses })
}
