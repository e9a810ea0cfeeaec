//! Clustering accuracy under optimal label matching, and decision-grid
//! export for 2-D models.

use std::io::Write;

use crate::error::{shape_err, Error, Result};
use crate::math::DenseMatrix;
use crate::ssl::ProbModel;
use crate::trainer::Model;

/// Counts indexed by (true class, predicted cluster).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(counts: Vec<Vec<u64>>) -> Self {
        Self { counts }
    }

    pub fn from_predictions(truth: &[usize], pred: &[usize], k: usize) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(shape_err(
                "confusion",
                format!("{} vs {} entries", truth.len(), pred.len()),
            ));
        }
        let mut counts = vec![vec![0u64; k]; k];
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= k || p >= k {
                return Err(Error::Index {
                    op: "confusion",
                    index: t.max(p),
                    bound: k,
                });
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn rows(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, class: usize, cluster: usize) -> u64 {
        self.counts[class][cluster]
    }

    fn ensure_square(&self) -> Result<usize> {
        let k = self.counts.len();
        if self.counts.iter().any(|r| r.len() != k) {
            return Err(shape_err("hungarian_match_accuracy", "confusion matrix is not square"));
        }
        Ok(k)
    }

    /// Accuracy when cluster `perm[c]` is read as class `c`.
    pub fn accuracy_under(&self, perm: &[usize]) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let hits: u64 = perm.iter().enumerate().map(|(c, &k)| self.counts[c][k]).sum();
        hits as f64 / total as f64
    }
}

/// Maximum-trace assignment via the Hungarian algorithm. Returns the
/// matched accuracy and `perm` with `perm[class] = cluster`.
pub fn hungarian_match_accuracy(confusion: &ConfusionMatrix) -> Result<(f64, Vec<usize>)> {
    let n = confusion.ensure_square()?;
    if n == 0 {
        return Ok((0.0, vec![]));
    }
    let max = confusion.counts.iter().flatten().copied().max().unwrap_or(0) as i64;
    // minimize (max − count); 1-based potentials, column 0 is a sentinel
    let cost = |i: usize, j: usize| max - confusion.counts[i - 1][j - 1] as i64;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut owner = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    Ok((confusion.accuracy_under(&perm), perm))
}

/// Largest cluster count accepted by [`exhaustive_match_accuracy`].
pub const EXHAUSTIVE_MAX_K: usize = 8;

/// Brute-force search over all K! assignments; K ≤ 8.
pub fn exhaustive_match_accuracy(confusion: &ConfusionMatrix) -> Result<(f64, Vec<usize>)> {
    let n = confusion.ensure_square()?;
    if n > EXHAUSTIVE_MAX_K {
        return Err(Error::Argument(format!(
            "exhaustive matching limited to K <= 8, got {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (confusion.accuracy_under(&perm), perm.clone());
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let acc = confusion.accuracy_under(&perm);
            if acc > best.0 {
                best = (acc, perm.clone());
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub pred: usize,
    pub confidence: f64,
}

pub const GRID_CSV_HEADER: &str = "x,y,pred,confidence";

fn lattice(lo: f64, hi: f64, r: usize) -> impl Iterator<Item = f64> {
    let step = if r > 1 { (hi - lo) / (r - 1) as f64 } else { 0.0 };
    (0..r).map(move |i| lo + step * i as f64)
}

/// Predicted class and top responsibility on an `r x r` lattice over the
/// given ranges, rows ordered by y then x.
pub fn decision_grid(
    model: &Model,
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: usize,
) -> Result<Vec<GridPoint>> {
    if model.backbone.input_dim() != 2 {
        return Err(Error::Argument(format!(
            "decision grids need 2-D inputs, model takes {}",
            model.backbone.input_dim()
        )));
    }
    if resolution == 0 {
        return Err(Error::Argument("grid resolution must be >= 1".into()));
    }
    let mut pts = Vec::with_capacity(resolution * resolution);
    for y in lattice(y_range.0, y_range.1, resolution) {
        for x in lattice(x_range.0, x_range.1, resolution) {
            pts.push([x, y]);
        }
    }
    let probs = model.probs(&DenseMatrix::from_rows(&pts)?)?;
    let pred = probs.argmax_rows();
    Ok(pts
        .iter()
        .zip(pred)
        .enumerate()
        .map(|(i, (p, k))| GridPoint {
            x: p[0],
            y: p[1],
            pred: k,
            confidence: probs[(i, k)],
        })
        .collect())
}

pub fn write_grid_csv(points: &[GridPoint], out: &mut impl Write) -> Result<()> {
    writeln!(out, "{GRID_CSV_HEADER}")?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.x, p.y, p.pred, p.confidence)?;
    }
    Ok(())
}
