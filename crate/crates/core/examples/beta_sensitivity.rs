//! Test accuracy on two moons as β grows from 0 to 100, 5 seeds per value.
//! Large β lets the clustering loss dominate and the features collapse.
//!
//!     cargo run --release --example beta_sensitivity

use cluster_ssl::experiment::{by_beta, run_spec, ExperimentSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ExperimentSpec::from_toml_str(include_str!("../specs/beta_sweep.toml"))?;
    let runs = run_spec(&spec, 0)?;
    println!("{:>6}  {:>8}  {:>8}  {:>8}", "β", "val", "test", "final");
    for s in by_beta(&runs) {
        let bar = "#".repeat((s.mean_selected_test * 40.0).round() as usize);
        println!(
            "{:>6}  {:>8.4}  {:>8.4}  {:>8.4}  {bar}",
            s.beta, s.mean_best_val, s.mean_selected_test, s.mean_final_test
        );
    }
    println!("per-run rows: {}", spec.output.dir.join("aggregate.csv").display());
    Ok(())
}
