//! Experiment spec files: TOML with a fixed set of tables.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{gaussian_blobs, two_moons, BlobConfig, Dataset, Split};
use crate::error::Result;
use crate::rng::SeededRng;
use crate::trainer::{ModelConfig, TrainConfig};

/// Synthetic data source, selected by the `generator` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    TwoMoons {
        n: usize,
        #[serde(default = "default_moons_noise")]
        noise: f64,
        #[serde(default)]
        standardize: bool,
        seed: Option<u64>,
    },
    Blobs {
        clusters: usize,
        n_per_class: usize,
        #[serde(default = "default_blob_dim")]
        dim: usize,
        #[serde(default = "default_center_scale")]
        center_scale: f64,
        #[serde(default = "default_blob_sd")]
        sd: f64,
        #[serde(default)]
        min_separation: f64,
        #[serde(default)]
        standardize: bool,
        seed: Option<u64>,
    },
}

fn default_moons_noise() -> f64 {
    0.1
}

fn default_blob_dim() -> usize {
    2
}

fn default_center_scale() -> f64 {
    10.0
}

fn default_blob_sd() -> f64 {
    0.5
}

/// Stream key for the dataset when `dataset.seed` is absent.
const DATASET_STREAM: u64 = u64::MAX;

impl DatasetSpec {
    fn explicit_seed(&self) -> Option<u64> {
        match self {
            DatasetSpec::TwoMoons { seed, .. } | DatasetSpec::Blobs { seed, .. } => *seed,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            DatasetSpec::TwoMoons { .. } => 2,
            DatasetSpec::Blobs { clusters, .. } => *clusters,
        }
    }

    /// Generates the dataset; without an explicit seed it is derived from
    /// the spec's top-level seed.
    pub fn generate(&self, top_seed: u64) -> Result<Dataset> {
        let mut rng = match self.explicit_seed() {
            Some(s) => SeededRng::new(s),
            None => SeededRng::new(top_seed).derive(DATASET_STREAM),
        };
        let (mut ds, standardize) = match *self {
            DatasetSpec::TwoMoons {
                n, noise, standardize, ..
            } => (two_moons(n, noise, &mut rng)?, standardize),
            DatasetSpec::Blobs {
                clusters,
                n_per_class,
                dim,
                center_scale,
                sd,
                min_separation,
                standardize,
                ..
            } => {
                let cfg = BlobConfig {
                    clusters,
                    n_per_class,
                    dim,
                    center_scale,
                    sd,
                    min_separation,
                };
                (gaussian_blobs(&cfg, &mut rng)?, standardize)
            }
        };
        if standardize {
            ds.standardize();
        }
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub labels_per_class: usize,
}

/// Lists swept as a Cartesian product; an absent list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub beta: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub labels_per_class: Option<Vec<usize>>,
    /// Replicate indices; each yields its own label draw and training seed.
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Lattice size of `grid.csv` for 2-D inputs.
    pub grid_resolution: usize,
    pub checkpoint: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            grid_resolution: 100,
            checkpoint: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Root of every random stream in the experiment.
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub split: SplitSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// One problem found in a spec, anchored to a line when the key is present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

/// Problems that keep a spec from running.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpecError {
    /// Unreadable file or TOML/schema error; the message names line and column.
    Malformed(String),
    Invalid(Vec<Violation>),
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecError::Malformed(m) => f.write_str(m.trim_end()),
            SpecError::Invalid(v) => {
                let lines: Vec<String> = v.iter().map(ToString::to_string).collect();
                f.write_str(&lines.join("\n"))
            }
        }
    }
}

impl std::error::Error for SpecError {}

/// Line (1-based) of `key = ...` inside the table `table`, or of the table
/// header when the key is absent. Handles plain `[a.b]` headers only.
fn locate(text: &str, table: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == table {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current != table {
            continue;
        }
        if let (Some(k), Some((lhs, _))) = (key, line.split_once('=')) {
            if lhs.trim() == k {
                return Some(i + 1);
            }
        }
    }
    header_line
}

fn violation(text: &str, dotted: &str, message: impl Into<String>) -> Violation {
    let (table, key) = match dotted.rsplit_once('.') {
        Some((t, k)) => (t, Some(k)),
        None => ("", Some(dotted)),
    };
    Violation {
        line: locate(text, table, key),
        key: dotted.to_string(),
        message: message.into(),
    }
}

/// Splits a `"train.beta must ..."` message into its leading key path.
fn keyed(text: &str, message: &str) -> Violation {
    let (key, rest) = message.split_once(' ').unwrap_or((message, ""));
    violation(text, key, rest)
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, SpecError> {
        toml::from_str(text).map_err(|e| SpecError::Malformed(e.to_string()))
    }

    /// Reads and parses `path` without validating.
    pub fn load(path: &Path) -> std::result::Result<(Self, String), SpecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpecError::Malformed(format!("cannot read {}: {e}", path.display())))?;
        let spec = Self::from_toml_str(&text).map_err(|e| match e {
            SpecError::Malformed(m) => SpecError::Malformed(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((spec, text))
    }

    /// Every schema and invariant violation; `text` is the source used to
    /// anchor messages to lines.
    pub fn violations(&self, text: &str) -> Vec<Violation> {
        let mut out: Vec<Violation> = self
            .model
            .violations()
            .iter()
            .chain(&self.train.violations())
            .map(|m| keyed(text, m))
            .collect();

        if self.train.seed != 0 {
            out.push(violation(
                text,
                "train.seed",
                "is set per run from the top-level seed; remove it",
            ));
        }
        let classes = self.dataset.classes();
        if self.model.clusters != classes {
            out.push(violation(
                text,
                "model.clusters",
                format!("is {} but the dataset has {classes} classes", self.model.clusters),
            ));
        }

        let sweep = &self.sweep;
        let lists: [(&str, Option<usize>); 4] = [
            ("sweep.beta", sweep.beta.as_ref().map(Vec::len)),
            ("sweep.delta", sweep.delta.as_ref().map(Vec::len)),
            ("sweep.labels_per_class", sweep.labels_per_class.as_ref().map(Vec::len)),
            ("sweep.seeds", sweep.seeds.as_ref().map(Vec::len)),
        ];
        for (key, len) in lists {
            if len == Some(0) {
                out.push(violation(text, key, "must not be empty when present"));
            }
        }
        for &b in sweep.beta.iter().flatten() {
            if !(b >= 0.0) {
                out.push(violation(text, "sweep.beta", format!("values must be >= 0, got {b}")));
            }
        }
        for &d in sweep.delta.iter().flatten() {
            if !(d >= 0.0) {
                out.push(violation(text, "sweep.delta", format!("values must be >= 0, got {d}")));
            } else if d > 0.0 && self.train.ssl.method == crate::ssl::SslMethod::None {
                out.push(violation(
                    text,
                    "sweep.delta",
                    format!("value {d} > 0 requires train.ssl.method other than none"),
                ));
            }
        }
        if let Some(seeds) = &sweep.seeds {
            let mut sorted = seeds.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != seeds.len() {
                out.push(violation(text, "sweep.seeds", "contains duplicates"));
            }
        }

        self.check_label_budget(text, &mut out);

        if self.output.grid_resolution == 0 {
            out.push(violation(text, "output.grid_resolution", "must be >= 1"));
        }
        if self.output.dir.as_os_str().is_empty() {
            out.push(violation(text, "output.dir", "must not be empty"));
        } else if self.output.dir.exists() && !self.output.dir.is_dir() {
            out.push(violation(
                text,
                "output.dir",
                format!("{} exists and is not a directory", self.output.dir.display()),
            ));
        }
        out
    }

    fn check_label_budget(&self, text: &str, out: &mut Vec<Violation>) {
        let budgets: Vec<(usize, &str)> = match &self.sweep.labels_per_class {
            Some(list) => list.iter().map(|&l| (l, "sweep.labels_per_class")).collect(),
            None => vec![(self.split.labels_per_class, "split.labels_per_class")],
        };
        for &(l, key) in &budgets {
            if l == 0 {
                out.push(violation(text, key, "must be >= 1"));
            }
        }
        let ds = match self.dataset.generate(self.seed) {
            Ok(ds) => ds,
            Err(e) => {
                out.push(violation(text, "dataset", e.to_string()));
                return;
            }
        };
        let counts = ds.class_counts(Split::Train);
        let smallest = counts.iter().copied().min().unwrap_or(0);
        for (l, key) in budgets {
            if l > smallest {
                out.push(violation(
                    text,
                    key,
                    format!("{l} labels per class exceeds the smallest training class population ({smallest})"),
                ));
            }
        }
    }

    /// Parses and validates in one go.
    pub fn load_valid(path: &Path) -> std::result::Result<Self, SpecError> {
        let (spec, text) = Self::load(path)?;
        let v = spec.violations(&text);
        if v.is_empty() {
            Ok(spec)
        } else {
            Err(SpecError::Invalid(v))
        }
    }
}
