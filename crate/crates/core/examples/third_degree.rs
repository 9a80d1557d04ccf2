//! Separate schedules per customer group, against one common schedule and
//! perfect discrimination.

use nonlinear_tariff::counterfactual::{first_degree, ordering_chain, third_degree_by_covariates};
use nonlinear_tariff::market::{generate_synthetic_market, GeneratorSpec};
use nonlinear_tariff::profit::{OptimizeConfig, ScheduleFamily};

fn main() -> nonlinear_tariff::Result<()> {
    let market = generate_synthetic_market(&GeneratorSpec::reference(500), 4)?.market;
    let config = OptimizeConfig::default();

    let chain = ordering_chain(&market, &config)?;
    for s in chain.scenarios() {
        println!("{:<22} profit {:>12.0}  consumer welfare {:>12.0}", s.label, s.profit, s.consumer_welfare);
    }

    println!("\nschedules per covariate group:");
    for j in [1, 2, 4] {
        let g = third_degree_by_covariates(&market, j, ScheduleFamily::ViaOrigin, &config, &[])?;
        println!("  {j} groups: profit {:.0}", g.result.profit);
    }
    println!("perfect discrimination: {:.0}", first_degree(&market)?.profit);
    Ok(())
}
