//! The grid bisection optimizer on a plain function.

use nonlinear_tariff::profit::{grid_bisection, GridBisectionConfig};

fn main() -> nonlinear_tariff::Result<()> {
    let bowl = |x: &[f64]| Ok(-(x[0] - 1234.0).powi(2) - 0.5 * (x[1] - 3210.0).powi(2));
    let best = grid_bisection(bowl, &GridBisectionConfig::new(2))?;
    println!("argmax {:?} after {} rounds", best.argmax, best.trace.iterations());
    for row in &best.trace.rows {
        println!("{row:?}");
    }
    Ok(())
}
