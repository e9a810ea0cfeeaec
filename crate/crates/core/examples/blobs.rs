//! Four well-separated Gaussian blobs with a single label per class.
//!
//! Trains the semi-supervised model over a small β grid (3 seeds each),
//! then fits the clustering module alone, with no labels at all, and scores
//! it with Hungarian matching.
//!
//!     cargo run --release --example blobs

use cluster_ssl::experiment::{by_beta, run_spec, select_beta, ExperimentSpec};
use cluster_ssl::metrics::{hungarian_match_accuracy, ConfusionMatrix};
use cluster_ssl::trainer::{fit_clustering, ClusteringFitConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ExperimentSpec::from_toml_str(include_str!("../specs/blobs.toml"))?;
    let stats = by_beta(&run_spec(&spec, 0)?);
    for s in &stats {
        println!(
            "β={:<4} val {:.4}  test {:.4}",
            s.beta, s.mean_best_val, s.mean_selected_test
        );
    }
    let pick = select_beta(&stats, &[0.5, 1.0, 2.0]).ok_or("no candidate β")?;
    println!(
        "selected β={}: mean test accuracy {:.4}",
        pick.beta, pick.mean_selected_test
    );

    // unsupervised: cluster the raw inputs, then match clusters to classes
    let ds = spec.dataset.generate(spec.seed)?;
    let fit = fit_clustering(
        &ds.features,
        &ClusteringFitConfig {
            clusters: ds.classes,
            ..Default::default()
        },
    )?;
    let pred = fit.assign(&ds.features)?;
    let confusion = ConfusionMatrix::from_predictions(&ds.labels, &pred, ds.classes)?;
    let (acc, perm) = hungarian_match_accuracy(&confusion)?;
    println!("clustering only: matched accuracy {acc:.4}, class -> cluster {perm:?}");
    Ok(())
}
