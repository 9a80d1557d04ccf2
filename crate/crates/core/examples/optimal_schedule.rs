//! Search for profit-maximizing schedules in each family.

use nonlinear_tariff::market::{generate_synthetic_market, GeneratorSpec};
use nonlinear_tariff::profit::{optimize_schedule, OptimizeConfig, ScheduleFamily};

fn main() -> nonlinear_tariff::Result<()> {
    let market = generate_synthetic_market(&GeneratorSpec::reference(1500), 5)?.market;
    let config = OptimizeConfig::default();

    for family in [ScheduleFamily::Linear, ScheduleFamily::TwoPart, ScheduleFamily::ViaOrigin, ScheduleFamily::Continuous] {
        let best = optimize_schedule(&market, family, &config)?;
        let rates: Vec<String> = best.schedule.rates.iter().map(|r| format!("{r:.0}")).collect();
        println!(
            "{:<11} profit {:>12.0}  rates [{}]  fee {:.0}  ({} evaluations)",
            family.name(),
            best.report.expected_profit,
            rates.join(", "),
            best.schedule.fixed_fee,
            best.evaluations
        );
    }
    Ok(())
}
