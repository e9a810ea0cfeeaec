//! The clustering module stacked on a base SSL loss: Pseudo-Label and VAT,
//! each alone (β = 0) and with the β picked on validation.
//!
//!     cargo run --release --example ssl_regularizer

use cluster_ssl::experiment::{by_beta, run_spec, select_beta, ExperimentSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let specs = [
        ("Pseudo-Label", include_str!("../specs/ssl_pseudo_label.toml")),
        ("VAT", include_str!("../specs/ssl_vat.toml")),
    ];
    for (name, text) in specs {
        let spec = ExperimentSpec::from_toml_str(text)?;
        let stats = by_beta(&run_spec(&spec, 0)?);
        let base = stats.iter().find(|s| s.beta == 0.0).ok_or("no β = 0 run")?;
        let pick = select_beta(&stats, &[0.5, 1.0, 2.0]).ok_or("no candidate β")?;
        println!(
            "{name:<13} alone {:.4}   + CM (β={}) {:.4}   ({:+.1} pp)",
            base.mean_selected_test,
            pick.beta,
            pick.mean_selected_test,
            100.0 * (pick.mean_selected_test - base.mean_selected_test)
        );
    }
    Ok(())
}
