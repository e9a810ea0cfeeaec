//! How the gap between CE and the clustering-regularized model changes with
//! the number of labels per class.
//!
//!     cargo run --release --example label_budget_sweep

use cluster_ssl::experiment::{run_spec, ExperimentSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ExperimentSpec::from_toml_str(include_str!("../specs/label_budget.toml"))?;
    let runs = run_spec(&spec, 0)?;
    let budgets = spec
        .sweep
        .labels_per_class
        .clone()
        .unwrap_or(vec![spec.split.labels_per_class]);
    let mean = |labels: usize, beta: f64| {
        let accs: Vec<f64> = runs
            .iter()
            .filter(|r| r.point.labels_per_class == labels && r.point.beta == beta)
            .map(|r| r.selected_test_acc)
            .collect();
        accs.iter().sum::<f64>() / accs.len() as f64
    };
    println!("labels/class   CE       CM (β=1)  gap");
    for l in budgets {
        let (ce, cm) = (mean(l, 0.0), mean(l, 1.0));
        println!("{l:>12}   {ce:.4}   {cm:.4}    {:+.1} pp", 100.0 * (cm - ce));
    }
    Ok(())
}
