//! Compare schedules with and without a per-customer fee.

use nonlinear_tariff::market::{generate_synthetic_market, GeneratorSpec};
use nonlinear_tariff::profit::{fixed_fee_analysis, OptimizeConfig};

fn main() -> nonlinear_tariff::Result<()> {
    let market = generate_synthetic_market(&GeneratorSpec::reference(1000), 2)?.market;
    let a = fixed_fee_analysis(&market, &OptimizeConfig::default())?;
    println!("costs: c1 {:.0}, c2 {:.0}", market.costs.c1, market.costs.c2);
    for (name, o) in [
        ("linear", &a.linear),
        ("two-part", &a.two_part),
        ("via origin", &a.via_origin),
        ("via origin + fee", &a.via_origin_fee),
    ] {
        println!("{name:<17} profit {:>12.0}  fee {:>6.0}  first rate {:.0}", o.report.expected_profit, o.schedule.fixed_fee, o.schedule.rates[0]);
    }
    Ok(())
}
