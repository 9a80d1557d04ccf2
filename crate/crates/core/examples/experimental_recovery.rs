//! Recover the joint law of value and group from a randomized price
//! experiment.

use nonlinear_tariff::counterfactual::{experimental_recovery, simulate_experiment, total_variation, true_joint, ExperimentConfig};
use nonlinear_tariff::market::{generate_synthetic_market, GeneratorSpec};

fn main() -> nonlinear_tariff::Result<()> {
    let market = generate_synthetic_market(&GeneratorSpec::reference(2000), 6)?.market;
    let config = ExperimentConfig {
        rows: 200_000,
        seed: 6,
        ..ExperimentConfig::default()
    };
    let data = simulate_experiment(&market, &config)?;
    let rec = experimental_recovery(&data, 6)?;
    let truth = true_joint(&market, &data)?;

    println!("strata: {}", rec.stratum_labels.join(" | "));
    for (label, row) in rec.cell_labels.iter().zip(&rec.joint) {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.3}")).collect();
        println!("{label:<20} {}", cells.join(" "));
    }
    println!("total variation from the true joint: {:.4}", total_variation(&rec.joint, &truth));
    for w in &rec.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
