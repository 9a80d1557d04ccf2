//! Price each size segment alone, then let customers switch segments.

use nonlinear_tariff::counterfactual::ic_gap_analysis;
use nonlinear_tariff::market::{generate_synthetic_market, GeneratorSpec};
use nonlinear_tariff::profit::OptimizeConfig;

fn main() -> nonlinear_tariff::Result<()> {
    let market = generate_synthetic_market(&GeneratorSpec::reference(600), 9)?.market;
    let gap = ic_gap_analysis(&market, &OptimizeConfig::default())?;

    println!("optimal schedule profit      {:>12.0}", gap.optimal.report.expected_profit);
    println!("segment-by-segment profit    {:>12.0}", gap.individual.true_profit);
    println!("gap {:.0} ({:.2}% of optimal)", gap.gap, 100.0 * gap.relative_gap);
    println!("rate spread: optimal {:.0}, individual {:.0}", gap.optimal_spread(), gap.individual_spread());
    for s in &gap.segments {
        println!("  bin {:>8}: {:>+10.0}", s.bin, s.difference);
    }
    Ok(())
}
