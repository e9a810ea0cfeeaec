//! Synthetic datasets, labeled/unlabeled splits and batch sampling.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::DenseMatrix;
use crate::rng::SeededRng;

/// Default train/validation/test fractions for synthetic data.
pub const DEFAULT_SPLIT: [f64; 3] = [0.6, 0.2, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, splits: Vec<Split>, classes: usize) -> Result<Self> {
        if labels.len() != features.rows() || splits.len() != features.rows() {
            return Err(Error::Argument(format!(
                "{} rows, {} labels, {} split tags",
                features.rows(),
                labels.len(),
                splits.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Index {
                op: "Dataset",
                index: y,
                bound: classes,
            });
        }
        Ok(Self {
            features,
            labels,
            splits,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Features and labels of one split.
    pub fn subset(&self, split: Split) -> (DenseMatrix, Vec<usize>) {
        let idx = self.indices(split);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        (self.features.select_rows(&idx), labels)
    }

    /// Per-class sample counts within `split`.
    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for i in self.indices(split) {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    /// Rescales every column to zero mean and unit variance using statistics
    /// of the training split only. Constant columns are only centered.
    pub fn standardize(&mut self) {
        let train = self.indices(Split::Train);
        if train.is_empty() {
            return;
        }
        let n = train.len() as f64;
        for j in 0..self.input_dim() {
            let mean = train.iter().map(|&i| self.features[(i, j)]).sum::<f64>() / n;
            let var = train
                .iter()
                .map(|&i| (self.features[(i, j)] - mean).powi(2))
                .sum::<f64>()
                / n;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for i in 0..self.len() {
                let v = &mut self.features.row_mut(i)[j];
                *v = (*v - mean) / sd;
            }
        }
    }

    /// CSV with columns `feature_0..feature_{d-1}, label, split, labeled_flag`.
    pub fn write_csv(&self, labeled: &[usize], out: &mut impl Write) -> Result<()> {
        let mut flag = vec![false; self.len()];
        for &i in labeled {
            flag[i] = true;
        }
        let header: Vec<String> = (0..self.input_dim()).map(|j| format!("feature_{j}")).collect();
        writeln!(out, "{},label,split,labeled_flag", header.join(","))?;
        for i in 0..self.len() {
            for v in self.features.row(i) {
                write!(out, "{v},")?;
            }
            writeln!(out, "{},{},{}", self.labels[i], self.splits[i], u8::from(flag[i]))?;
        }
        Ok(())
    }
}

/// Random split tags in the given train/validation/test proportions.
pub fn assign_splits(n: usize, fractions: [f64; 3], rng: &mut SeededRng) -> Vec<Split> {
    let total: f64 = fractions.iter().sum();
    let n_train = ((fractions[0] / total) * n as f64).round() as usize;
    let n_val = (((fractions[1] / total) * n as f64).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut tags = vec![Split::Test; n];
    for (pos, &i) in order.iter().enumerate() {
        if pos < n_train {
            tags[i] = Split::Train;
        } else if pos < n_train + n_val {
            tags[i] = Split::Validation;
        }
    }
    tags
}

/// Two interleaved half-circles of radius 1. The upper moon is
/// `(cos t, sin t)`, the lower one `(1 − cos t, 0.5 − sin t)`, with `t`
/// evenly spaced over `[0, π]`; labels 0 and 1 respectively.
pub fn two_moons(n: usize, noise_sd: f64, rng: &mut SeededRng) -> Result<Dataset> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Argument(format!("two_moons needs an even n >= 2, got {n}")));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::Argument(format!("noise_sd must be >= 0, got {noise_sd}")));
    }
    let half = n / 2;
    let step = if half > 1 { PI / (half - 1) as f64 } else { 0.0 };
    let mut features = DenseMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        for j in 0..half {
            let t = step * j as f64;
            let (x, y) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let row = features.row_mut(class * half + j);
            row[0] = x + noise_sd * rng.normal();
            row[1] = y + noise_sd * rng.normal();
            labels.push(class);
        }
    }
    let splits = assign_splits(n, DEFAULT_SPLIT, rng);
    Dataset::new(features, labels, splits, 2)
}

/// Parameters of [`gaussian_blobs`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobConfig {
    pub clusters: usize,
    pub n_per_class: usize,
    pub dim: usize,
    /// Centers are drawn uniformly from `[−center_scale, center_scale]^d`.
    pub center_scale: f64,
    /// Per-coordinate noise std around each center.
    pub sd: f64,
    /// Minimum Euclidean distance between centers; 0 disables the check.
    pub min_separation: f64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            clusters: 4,
            n_per_class: 100,
            dim: 2,
            center_scale: 10.0,
            sd: 0.5,
            min_separation: 0.0,
        }
    }
}

/// Center draws tried per cluster before giving up on `min_separation`.
const PLACEMENT_ATTEMPTS: usize = 10_000;

fn place_centers(cfg: &BlobConfig, rng: &mut SeededRng) -> Result<DenseMatrix> {
    let mut centers = DenseMatrix::zeros(cfg.clusters, cfg.dim);
    let min_sq = cfg.min_separation * cfg.min_separation;
    for k in 0..cfg.clusters {
        let mut attempts = 0;
        loop {
            let c: Vec<f64> = (0..cfg.dim)
                .map(|_| rng.uniform(-cfg.center_scale, cfg.center_scale))
                .collect();
            let clear = (0..k).all(|j| {
                let d: f64 = centers.row(j).iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                d >= min_sq
            });
            if clear {
                centers.row_mut(k).copy_from_slice(&c);
                break;
            }
            attempts += 1;
            if attempts == PLACEMENT_ATTEMPTS {
                return Err(Error::Argument(format!(
                    "cannot place {} centers {} apart inside a box of half-width {}",
                    cfg.clusters, cfg.min_separation, cfg.center_scale
                )));
            }
        }
    }
    Ok(centers)
}

/// Isotropic Gaussian blobs around random centers. Returns the dataset and
/// the centers.
pub fn gaussian_blobs_with_centers(cfg: &BlobConfig, rng: &mut SeededRng) -> Result<(Dataset, DenseMatrix)> {
    if cfg.clusters < 2 || cfg.n_per_class == 0 || cfg.dim == 0 {
        return Err(Error::Argument(format!(
            "gaussian_blobs needs K >= 2, n_per_class >= 1, d >= 1 (got {}, {}, {})",
            cfg.clusters, cfg.n_per_class, cfg.dim
        )));
    }
    if !(cfg.sd >= 0.0) || !(cfg.center_scale >= 0.0) || !(cfg.min_separation >= 0.0) {
        return Err(Error::Argument("blob scales must be non-negative".into()));
    }
    let centers = place_centers(cfg, rng)?;
    let mut features = DenseMatrix::zeros(cfg.clusters * cfg.n_per_class, cfg.dim);
    let mut labels = Vec::with_capacity(features.rows());
    for k in 0..cfg.clusters {
        for j in 0..cfg.n_per_class {
            let row = features.row_mut(k * cfg.n_per_class + j);
            for (v, c) in row.iter_mut().zip(centers.row(k)) {
                *v = c + cfg.sd * rng.normal();
            }
            labels.push(k);
        }
    }
    let splits = assign_splits(features.rows(), DEFAULT_SPLIT, rng);
    Ok((Dataset::new(features, labels, splits, cfg.clusters)?, centers))
}

pub fn gaussian_blobs(cfg: &BlobConfig, rng: &mut SeededRng) -> Result<Dataset> {
    Ok(gaussian_blobs_with_centers(cfg, rng)?.0)
}

/// Labeled and unlabeled index pools over the training split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSplit {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

/// Draws exactly `labels_per_class` labeled training samples per class;
/// the rest of the training split becomes the unlabeled pool.
pub fn split_labeled(ds: &Dataset, labels_per_class: usize, rng: &mut SeededRng) -> Result<LabelSplit> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes];
    for i in ds.indices(Split::Train) {
        by_class[ds.labels[i]].push(i);
    }
    if let Some((k, pool)) = by_class.iter().enumerate().find(|(_, p)| p.len() < labels_per_class) {
        return Err(Error::Argument(format!(
            "class {k} has {} training samples, {labels_per_class} labels requested",
            pool.len()
        )));
    }
    let mut labeled = Vec::with_capacity(labels_per_class * ds.classes);
    let mut unlabeled = Vec::new();
    for mut pool in by_class {
        rng.shuffle(&mut pool);
        let (l, u) = pool.split_at(labels_per_class);
        labeled.extend_from_slice(l);
        unlabeled.extend_from_slice(u);
    }
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    Ok(LabelSplit { labeled, unlabeled })
}

/// One training step's inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub labeled: DenseMatrix,
    pub labels: Vec<usize>,
    pub unlabeled: DenseMatrix,
}

impl Batch {
    pub fn n_labeled(&self) -> usize {
        self.labels.len()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled.rows()
    }
}

fn add_noise(m: &mut DenseMatrix, sd: f64, rng: &mut SeededRng) {
    if sd > 0.0 {
        for v in m.as_mut_slice() {
            *v += sd * rng.normal();
        }
    }
}

/// Samples `n_l` labeled and `n_u` unlabeled rows with replacement and adds
/// Gaussian noise of std `noise_sd` to both (0 disables augmentation).
pub fn sample_batch(
    ds: &Dataset,
    pools: &LabelSplit,
    n_l: usize,
    n_u: usize,
    noise_sd: f64,
    rng: &mut SeededRng,
) -> Result<Batch> {
    if n_l == 0 {
        return Err(Error::Contract(
            "a training batch needs at least one labeled sample".into(),
        ));
    }
    if pools.labeled.is_empty() {
        return Err(Error::Contract("labeled pool is empty".into()));
    }
    if n_u > 0 && pools.unlabeled.is_empty() {
        return Err(Error::Contract("unlabeled pool is empty".into()));
    }
    let l_idx: Vec<usize> = (0..n_l)
        .map(|_| pools.labeled[rng.index(pools.labeled.len())])
        .collect();
    let u_idx: Vec<usize> = (0..n_u)
        .map(|_| pools.unlabeled[rng.index(pools.unlabeled.len())])
        .collect();
    let mut labeled = ds.features.select_rows(&l_idx);
    let mut unlabeled = ds.features.select_rows(&u_idx);
    add_noise(&mut labeled, noise_sd, rng);
    add_noise(&mut unlabeled, noise_sd, rng);
    Ok(Batch {
        labeled,
        labels: l_idx.iter().map(|&i| ds.labels[i]).collect(),
        unlabeled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(clusters: usize, n_per_class: usize, dim: usize, center_scale: f64, sd: f64) -> BlobConfig {
        BlobConfig {
            clusters,
            n_per_class,
            dim,
            center_scale,
            sd,
            min_separation: 0.0,
        }
    }

    #[test]
    fn min_separation_is_respected() {
        let cfg = BlobConfig {
            clusters: 6,
            min_separation: 5.0,
            ..Default::default()
        };
        for seed in 0..20 {
            let (_, c) = gaussian_blobs_with_centers(&cfg, &mut SeededRng::new(seed)).unwrap();
            for i in 0..6 {
                for j in 0..i {
                    let d: f64 = c.row(i).iter().zip(c.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    assert!(d.sqrt() >= 5.0);
                }
            }
        }
        let crowded = BlobConfig {
            clusters: 5,
            center_scale: 1.0,
            min_separation: 10.0,
            ..Default::default()
        };
        assert!(gaussian_blobs(&crowded, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn standardize_uses_training_statistics() {
        let features = DenseMatrix::from_rows(&[[1.0, 5.0], [3.0, 5.0], [100.0, 0.0]]).unwrap();
        let mut ds = Dataset::new(
            features,
            vec![0, 1, 0],
            vec![Split::Train, Split::Train, Split::Test],
            2,
        )
        .unwrap();
        ds.standardize();
        assert_eq!(ds.features.row(0), &[-1.0, 0.0]);
        assert_eq!(ds.features.row(1), &[1.0, 0.0]);
        assert_eq!(ds.features.row(2), &[98.0, -5.0]);
    }

    #[test]
    fn noiseless_moons_lie_on_arcs() {
        let mut rng = SeededRng::new(1);
        let ds = two_moons(200, 0.0, &mut rng).unwrap();
        for (row, &y) in ds.features.row_iter().zip(&ds.labels) {
            let (cx, cy) = if y == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((row[0] - cx).powi(2) + (row[1] - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
            if y == 0 {
                assert!(row[1] >= -1e-12);
            } else {
                assert!(row[1] <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn moons_are_balanced_and_separated() {
        let mut rng = SeededRng::new(2);
        let ds = two_moons(1600, 0.1, &mut rng).unwrap();
        assert_eq!(ds.labels.iter().filter(|&&y| y == 0).count(), 800);
        assert_eq!(ds.labels.iter().filter(|&&y| y == 1).count(), 800);
        let mean_x = |c: usize| {
            let xs: Vec<f64> = (0..ds.len())
                .filter(|&i| ds.labels[i] == c)
                .map(|i| ds.features[(i, 0)])
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        // arc means: 0 for the upper moon, 1 for the lower one
        assert!(mean_x(0).abs() < 0.05);
        assert!((mean_x(1) - 1.0).abs() < 0.05);
        assert!(two_moons(7, 0.1, &mut rng).is_err());
    }

    #[test]
    fn splits_partition_in_proportion() {
        let mut rng = SeededRng::new(3);
        let ds = two_moons(1000, 0.1, &mut rng).unwrap();
        assert_eq!(ds.indices(Split::Train).len(), 600);
        assert_eq!(ds.indices(Split::Validation).len(), 200);
        assert_eq!(ds.indices(Split::Test).len(), 200);
    }

    #[test]
    fn blobs_without_spread_sit_on_centers() {
        let mut rng = SeededRng::new(4);
        let (ds, c) = gaussian_blobs_with_centers(&blobs(3, 5, 2, 10.0, 0.0), &mut rng).unwrap();
        for (row, &y) in ds.features.row_iter().zip(&ds.labels) {
            assert_eq!(row, c.row(y));
        }
        assert!(c.as_slice().iter().all(|v| v.abs() <= 10.0));
    }

    #[test]
    fn blob_means_within_clt_bound() {
        // a 3-sigma band is exceeded with probability ~0.27% per component;
        // over 240 components more than 4 misses would be a 1-in-800 event
        let (n_per, sd) = (400, 0.7);
        let mut misses = 0;
        for seed in 0..20 {
            let mut rng = SeededRng::new(seed);
            let (ds, c) = gaussian_blobs_with_centers(&blobs(3, n_per, 4, 5.0, sd), &mut rng).unwrap();
            for k in 0..3 {
                for j in 0..4 {
                    let m = (0..ds.len())
                        .filter(|&i| ds.labels[i] == k)
                        .map(|i| ds.features[(i, j)])
                        .sum::<f64>()
                        / n_per as f64;
                    if (m - c[(k, j)]).abs() >= 3.0 * sd / (n_per as f64).sqrt() {
                        misses += 1;
                    }
                }
            }
        }
        assert!(misses <= 4, "{misses} of 240 sample means outside 3 sigma");
    }

    #[test]
    fn label_split_counts_exact() {
        let mut rng = SeededRng::new(6);
        let ds = two_moons(1600, 0.1, &mut rng).unwrap();
        let s = split_labeled(&ds, 3, &mut rng).unwrap();
        assert_eq!(s.labeled.len(), 6);
        let counts = s.labeled.iter().fold([0; 2], |mut c, &i| {
            c[ds.labels[i]] += 1;
            c
        });
        assert_eq!(counts, [3, 3]);
        assert_eq!(s.labeled.len() + s.unlabeled.len(), ds.indices(Split::Train).len());
        assert!(s
            .labeled
            .iter()
            .chain(&s.unlabeled)
            .all(|&i| ds.splits[i] == Split::Train));

        let s2 = split_labeled(&ds, 3, &mut SeededRng::new(99)).unwrap();
        assert_ne!(s.labeled, s2.labeled);
    }

    #[test]
    fn full_budget_leaves_no_unlabeled() {
        let features = DenseMatrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let ds = Dataset::new(features, vec![0, 1, 0, 1], vec![Split::Train; 4], 2).unwrap();
        let mut rng = SeededRng::new(7);
        let s = split_labeled(&ds, 2, &mut rng).unwrap();
        assert!(s.unlabeled.is_empty());
        assert_eq!(s.labeled, vec![0, 1, 2, 3]);
        assert!(split_labeled(&ds, 3, &mut rng).is_err());
    }

    #[test]
    fn batches_sample_from_pools() {
        let mut rng = SeededRng::new(8);
        let ds = two_moons(100, 0.1, &mut rng).unwrap();
        let pools = split_labeled(&ds, 2, &mut rng).unwrap();
        let b = sample_batch(&ds, &pools, 4, 0, 0.0, &mut rng).unwrap();
        assert_eq!(b.n_unlabeled(), 0);
        for (row, &y) in b.labeled.row_iter().zip(&b.labels) {
            let hit = pools
                .labeled
                .iter()
                .any(|&i| ds.features.row(i) == row && ds.labels[i] == y);
            assert!(hit);
        }
        let empty = LabelSplit {
            labeled: vec![],
            unlabeled: pools.unlabeled.clone(),
        };
        assert!(matches!(
            sample_batch(&ds, &empty, 2, 2, 0.0, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn augmentation_noise_has_requested_spread() {
        let mut rng = SeededRng::new(9);
        let ds = gaussian_blobs(&blobs(2, 10, 1, 1.0, 0.0), &mut rng).unwrap();
        let pools = LabelSplit {
            labeled: vec![0],
            unlabeled: vec![1],
        };
        let b = sample_batch(&ds, &pools, 10_000, 0, 0.3, &mut rng).unwrap();
        let base = ds.features[(0, 0)];
        let diffs: Vec<f64> = b.labeled.as_slice().iter().map(|v| v - base).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt();
        assert!((sd - 0.3).abs() < 0.03);
    }

    #[test]
    fn generators_are_deterministic() {
        let a = two_moons(64, 0.2, &mut SeededRng::new(10)).unwrap();
        let b = two_moons(64, 0.2, &mut SeededRng::new(10)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_export_shape() {
        let ds = two_moons(4, 0.0, &mut SeededRng::new(11)).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&[1], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "feature_0,feature_1,label,split,labeled_flag");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].ends_with(",1"));
    }
}
