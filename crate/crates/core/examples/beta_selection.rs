//! Picks β for two moons on the validation split, then compares the pick
//! against CE alone on the test split (5 seeds each).
//!
//!     cargo run --release --example beta_selection

use cluster_ssl::experiment::{by_beta, run_spec, select_beta, ExperimentSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ExperimentSpec::from_toml_str(include_str!("../specs/two_moons_tuned.toml"))?;
    let stats = by_beta(&run_spec(&spec, 0)?);
    for s in &stats {
        println!(
            "β={:<4} val {:.4}  test {:.4}",
            s.beta, s.mean_best_val, s.mean_selected_test
        );
    }
    let ce = stats.iter().find(|s| s.beta == 0.0).ok_or("no β = 0 run")?;
    let pick = select_beta(&stats, &[0.5, 1.0, 2.0]).ok_or("no candidate β")?;
    println!(
        "selected β={} : test {:.4} vs CE {:.4} ({:+.1} pp)",
        pick.beta,
        pick.mean_selected_test,
        ce.mean_selected_test,
        100.0 * (pick.mean_selected_test - ce.mean_selected_test)
    );
    Ok(())
}
