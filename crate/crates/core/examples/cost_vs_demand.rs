//! Separate what costs and what demand heterogeneity contribute to the
//! shape of the optimal schedule.

use nonlinear_tariff::counterfactual::{cost_sweep, homogenize_demand};
use nonlinear_tariff::market::{generate_synthetic_market, CostParams, GeneratorSpec};
use nonlinear_tariff::profit::{optimize_schedule, OptimizeConfig, ScheduleFamily};

fn main() -> nonlinear_tariff::Result<()> {
    // Pass-through is measured against the zero-cost schedule.
    let market = generate_synthetic_market(&GeneratorSpec::reference(600), 1)?
        .market
        .with_costs(CostParams::zero());
    let config = OptimizeConfig::default();

    let sweep = cost_sweep(&market, &[0.0, 2000.0], &[0.0, 400.0, 800.0], &config)?;
    println!("c1      c2      rates");
    for p in &sweep.points {
        let rates: Vec<String> = p.optimum.schedule.rates.iter().map(|r| format!("{r:.0}")).collect();
        let pass = p.mean_pass_through().map_or("-".into(), |x| format!("{x:.2}"));
        println!("{:<7.0} {:<7.0} [{}] pass-through {pass}", p.costs.c1, p.costs.c2, rates.join(", "));
    }

    let flat = homogenize_demand(&market)?;
    let s = optimize_schedule(&flat, ScheduleFamily::ViaOrigin, &config)?;
    println!("\nhomogeneous demand rates: {:?}", s.schedule.rates.iter().map(|r| r.round()).collect::<Vec<_>>());
    Ok(())
}
