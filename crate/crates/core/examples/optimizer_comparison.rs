//! Grid bisection against the simplex method on the same profit surface.

use std::time::Instant;

use nonlinear_tariff::market::{generate_synthetic_market, GeneratorSpec};
use nonlinear_tariff::profit::{optimize_schedule, OptimizeConfig, Optimizer, ScheduleFamily};

fn main() -> nonlinear_tariff::Result<()> {
    let market = generate_synthetic_market(&GeneratorSpec::reference(800), 12)?.market;
    for optimizer in [Optimizer::GridBisection, Optimizer::NelderMead] {
        let config = OptimizeConfig {
            optimizer,
            ..OptimizeConfig::default()
        };
        let t = Instant::now();
        let best = optimize_schedule(&market, ScheduleFamily::ViaOrigin, &config)?;
        println!(
            "{optimizer:?}: profit {:.0}, {} evaluations, {:.2?}",
            best.report.expected_profit,
            best.evaluations,
            t.elapsed()
        );
    }
    Ok(())
}
