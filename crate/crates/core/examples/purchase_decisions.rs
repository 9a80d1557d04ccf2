//! How a customer chooses quantity under a tiered schedule.

use nonlinear_tariff::choice::{solve_purchase, value_envelope};
use nonlinear_tariff::market::BinEdges;
use nonlinear_tariff::tariff::PriceSchedule;

fn main() -> nonlinear_tariff::Result<()> {
    let bins = BinEdges::new(vec![0, 10, 20, 50, 100])?;
    let schedule = PriceSchedule::via_origin(&bins, vec![3000.0, 2600.0, 2400.0, 2100.0, 1900.0])?;

    println!("value/unit  size  quantity  payment  surplus");
    for &size in &[5u32, 15, 40] {
        for &v in &[1800.0, 2500.0, 3200.0] {
            let d = solve_purchase(v, size, &schedule, 1.0)?;
            println!("{v:>10.0}  {size:>4}  {:>8}  {:>7.0}  {:>7.0}", d.quantity, d.payment, d.surplus);
        }
    }

    let env = value_envelope(15, &schedule, 1.0)?;
    println!("\nsize 15 envelope: {env:?}");
    Ok(())
}
