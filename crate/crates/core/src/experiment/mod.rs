//! Spec-driven experiments: expands a sweep grid into runs, trains each one
//! and writes its artifacts.
//!
//! Layout of an output directory:
//!
//! ```text
//! <dir>/aggregate.csv          one row per run, in grid order
//! <dir>/<run>/run.csv          per-step losses
//! <dir>/<run>/summary.txt      headline metrics and the effective config
//! <dir>/<run>/features.csv     learned features of every sample
//! <dir>/<run>/grid.csv         decision grid (2-D inputs only)
//! <dir>/<run>/checkpoint.txt   weight-averaged model (if enabled)
//! ```

mod checkpoint;
mod spec;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use spec::{DatasetSpec, ExperimentSpec, OutputSpec, SpecError, SplitSpec, SweepSpec, Violation};

use crate::data::{split_labeled, Dataset, LabelSplit};
use crate::error::Error;
use crate::metrics::{decision_grid, write_grid_csv};
use crate::rng::SeededRng;
use crate::trainer::{train, TrainConfig, TrainOutcome};

/// Stream key for the labeled subset, disjoint from the trainer's keys.
const LABEL_STREAM: u64 = 3;

pub const AGGREGATE_CSV_HEADER: &str =
    "run,beta,delta,labels_per_class,replicate,seed,final_test_acc,best_val_acc,best_val_iter,selected_test_acc";

/// One cell of the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPoint {
    pub beta: f64,
    pub delta: f64,
    pub labels_per_class: usize,
    pub replicate: u64,
    /// Training seed, derived from the spec seed and the replicate.
    pub seed: u64,
}

impl RunPoint {
    /// Directory name, e.g. `beta=0.5_delta=0_labels=3_rep=1`.
    pub fn name(&self) -> String {
        format!(
            "beta={}_delta={}_labels={}_rep={}",
            self.beta, self.delta, self.labels_per_class, self.replicate
        )
    }
}

/// Cartesian product β × δ × labels × replicates; absent lists fall back to
/// the base config and a single replicate 0.
pub fn expand_grid(spec: &ExperimentSpec) -> Vec<RunPoint> {
    let s = &spec.sweep;
    let betas = s.beta.clone().unwrap_or_else(|| vec![spec.train.beta]);
    let deltas = s.delta.clone().unwrap_or_else(|| vec![spec.train.delta]);
    let labels = s
        .labels_per_class
        .clone()
        .unwrap_or_else(|| vec![spec.split.labels_per_class]);
    let reps = s.seeds.clone().unwrap_or_else(|| vec![0]);
    let root = SeededRng::new(spec.seed);
    let mut points = Vec::new();
    for &beta in &betas {
        for &delta in &deltas {
            for &labels_per_class in &labels {
                for &replicate in &reps {
                    points.push(RunPoint {
                        beta,
                        delta,
                        labels_per_class,
                        replicate,
                        // kept within TOML's integer range for the config echo
                        seed: root.derive(replicate).seed() & i64::MAX as u64,
                    });
                }
            }
        }
    }
    points
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub point: RunPoint,
    pub final_test_acc: f64,
    pub best_val_acc: f64,
    pub best_val_iter: usize,
    pub selected_test_acc: f64,
}

#[derive(Debug)]
pub enum ExperimentError {
    Spec(SpecError),
    NonFinite { run: String, iteration: usize },
    Run { run: String, source: Error },
    Io { path: PathBuf, source: std::io::Error },
}

impl ExperimentError {
    /// 2 for spec problems, 3 for diverged training, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Spec(_) => 2,
            ExperimentError::NonFinite { .. } => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentError::Spec(e) => write!(f, "{e}"),
            ExperimentError::NonFinite { run, iteration } => {
                write!(f, "run {run}: non-finite loss at iteration {iteration}")
            }
            ExperimentError::Run { run, source } => write!(f, "run {run}: {source}"),
            ExperimentError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for ExperimentError {}

impl From<SpecError> for ExperimentError {
    fn from(e: SpecError) -> Self {
        ExperimentError::Spec(e)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// Replaces `output.dir`.
    pub out: Option<PathBuf>,
}

/// Parses and validates `path` without running anything.
pub fn validate_file(path: &Path) -> Result<Vec<Violation>, SpecError> {
    let (spec, text) = ExperimentSpec::load(path)?;
    Ok(spec.violations(&text))
}

pub fn run_file(path: &Path, options: &RunOptions) -> Result<Vec<RunSummary>, ExperimentError> {
    let (mut spec, text) = ExperimentSpec::load(path)?;
    if let Some(out) = &options.out {
        spec.output.dir = out.clone();
    }
    let violations = spec.violations(&text);
    if !violations.is_empty() {
        return Err(SpecError::Invalid(violations).into());
    }
    run_spec(&spec, options.jobs)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Runs every grid point (in parallel with `jobs` workers) and writes all
/// artifacts. The spec is assumed valid.
pub fn run_spec(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<RunSummary>, ExperimentError> {
    let dir = &spec.output.dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let dataset = spec
        .dataset
        .generate(spec.seed)
        .map_err(|source| ExperimentError::Run {
            run: "dataset".into(),
            source,
        })?;
    let points = expand_grid(spec);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Io {
            path: dir.clone(),
            source: std::io::Error::other(e),
        })?;
    let results: Vec<Result<RunSummary, ExperimentError>> =
        pool.install(|| points.par_iter().map(|p| run_point(spec, &dataset, p)).collect());
    // the first failure in grid order, independent of scheduling
    let summaries = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let path = dir.join("aggregate.csv");
    let mut out = create(&path)?;
    write_aggregate(&summaries, &mut out).map_err(io_err(&path))?;
    out.flush().map_err(io_err(&path))?;
    Ok(summaries)
}

pub fn write_aggregate(rows: &[RunSummary], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{AGGREGATE_CSV_HEADER}")?;
    for r in rows {
        let p = &r.point;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            p.name(),
            p.beta,
            p.delta,
            p.labels_per_class,
            p.replicate,
            p.seed,
            r.final_test_acc,
            r.best_val_acc,
            r.best_val_iter,
            r.selected_test_acc
        )?;
    }
    Ok(())
}

/// Per-β means over every other sweep axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaStats {
    pub beta: f64,
    pub runs: usize,
    pub mean_best_val: f64,
    /// Test accuracy of the validation-selected checkpoints.
    pub mean_selected_test: f64,
    pub mean_final_test: f64,
}

/// Groups runs by β, in order of first appearance.
pub fn by_beta(runs: &[RunSummary]) -> Vec<BetaStats> {
    let mut out: Vec<BetaStats> = Vec::new();
    for r in runs {
        let i = match out.iter().position(|s| s.beta == r.point.beta) {
            Some(i) => i,
            None => {
                out.push(BetaStats {
                    beta: r.point.beta,
                    runs: 0,
                    mean_best_val: 0.0,
                    mean_selected_test: 0.0,
                    mean_final_test: 0.0,
                });
                out.len() - 1
            }
        };
        let s = &mut out[i];
        s.runs += 1;
        s.mean_best_val += r.best_val_acc;
        s.mean_selected_test += r.selected_test_acc;
        s.mean_final_test += r.final_test_acc;
    }
    for s in &mut out {
        let n = s.runs as f64;
        s.mean_best_val /= n;
        s.mean_selected_test /= n;
        s.mean_final_test /= n;
    }
    out
}

/// The candidate β with the highest mean validation accuracy; ties go to
/// the smaller β.
pub fn select_beta<'a>(stats: &'a [BetaStats], candidates: &[f64]) -> Option<&'a BetaStats> {
    stats
        .iter()
        .filter(|s| candidates.contains(&s.beta))
        .fold(None, |best: Option<&BetaStats>, s| match best {
            Some(b) if b.mean_best_val > s.mean_best_val => Some(b),
            Some(b) if b.mean_best_val == s.mean_best_val && b.beta < s.beta => Some(b),
            _ => Some(s),
        })
}

/// Effective training config of one grid point.
pub fn point_config(spec: &ExperimentSpec, point: &RunPoint) -> TrainConfig {
    TrainConfig {
        beta: point.beta,
        delta: point.delta,
        seed: point.seed,
        ..spec.train.clone()
    }
}

/// Labeled subset of one grid point; shared by every β and δ.
pub fn point_labels(dataset: &Dataset, point: &RunPoint) -> crate::Result<LabelSplit> {
    let mut rng = SeededRng::new(point.seed).derive(LABEL_STREAM);
    split_labeled(dataset, point.labels_per_class, &mut rng)
}

/// Trains one grid point without touching the disk.
pub fn train_point(
    spec: &ExperimentSpec,
    dataset: &Dataset,
    point: &RunPoint,
) -> crate::Result<(LabelSplit, TrainOutcome)> {
    let pools = point_labels(dataset, point)?;
    let outcome = train(dataset, &pools, &spec.model, &point_config(spec, point))?;
    Ok((pools, outcome))
}

fn run_point(spec: &ExperimentSpec, dataset: &Dataset, point: &RunPoint) -> Result<RunSummary, ExperimentError> {
    let name = point.name();
    let failed = |source: Error| match source {
        Error::NonFiniteLoss { iteration, .. } => ExperimentError::NonFinite {
            run: name.clone(),
            iteration,
        },
        source => ExperimentError::Run {
            run: name.clone(),
            source,
        },
    };
    let (pools, outcome) = train_point(spec, dataset, point).map_err(failed)?;
    let dir = spec.output.dir.join(&name);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_artifacts(spec, dataset, point, &pools, &outcome, &dir).map_err(|e| match e {
        Error::Io(source) => ExperimentError::Io {
            path: dir.clone(),
            source,
        },
        other => failed(other),
    })?;
    let r = &outcome.record;
    Ok(RunSummary {
        point: point.clone(),
        final_test_acc: r.final_test_acc,
        best_val_acc: r.best_val_acc,
        best_val_iter: r.best_val_iter,
        selected_test_acc: r.selected_test_acc,
    })
}

/// Flattens a TOML table into `a.b.c = value` pairs.
fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn config_echo(spec: &ExperimentSpec, point: &RunPoint) -> Vec<(String, String)> {
    let mut out = vec![
        ("run".to_string(), point.name()),
        ("replicate".to_string(), point.replicate.to_string()),
        ("labels_per_class".to_string(), point.labels_per_class.to_string()),
    ];
    let sections = [
        ("dataset", toml::Value::try_from(&spec.dataset)),
        ("model", toml::Value::try_from(&spec.model)),
        ("train", toml::Value::try_from(point_config(spec, point))),
    ];
    for (name, value) in sections {
        if let Ok(v) = value {
            flatten(name, &v, &mut out);
        }
    }
    out
}

/// Writes one artifact file.
type Writer<'a> = Box<dyn Fn(&mut BufWriter<File>) -> crate::Result<()> + 'a>;

fn write_artifacts(
    spec: &ExperimentSpec,
    dataset: &Dataset,
    point: &RunPoint,
    pools: &LabelSplit,
    outcome: &TrainOutcome,
    dir: &Path,
) -> crate::Result<()> {
    let model = &outcome.averaged;
    let mut files: Vec<(&str, Writer<'_>)> = vec![
        ("run.csv", Box::new(|w| outcome.record.write_csv(w))),
        (
            "summary.txt",
            Box::new(|w| outcome.record.write_summary(&config_echo(spec, point), w)),
        ),
        (
            "features.csv",
            Box::new(|w| {
                let feats = Dataset::new(
                    model.features(&dataset.features)?,
                    dataset.labels.clone(),
                    dataset.splits.clone(),
                    dataset.classes,
                )?;
                feats.write_csv(&pools.labeled, w)
            }),
        ),
    ];
    if dataset.input_dim() == 2 {
        files.push((
            "grid.csv",
            Box::new(|w| {
                let (xr, yr) = bounds(&dataset.features, 0.5);
                let grid = decision_grid(model, xr, yr, spec.output.grid_resolution)?;
                write_grid_csv(&grid, w)
            }),
        ));
    }
    if spec.output.checkpoint {
        files.push(("checkpoint.txt", Box::new(|w| write_checkpoint(model, w))));
    }
    for (file, write) in files {
        let mut w = BufWriter::new(File::create(dir.join(file))?);
        write(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Per-axis range of the first two columns, widened by `margin`.
fn bounds(x: &crate::math::DenseMatrix, margin: f64) -> ((f64, f64), (f64, f64)) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for row in x.row_iter() {
        for j in 0..2 {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    ((lo[0] - margin, hi[0] + margin), (lo[1] - margin, hi[1] + margin))
}
