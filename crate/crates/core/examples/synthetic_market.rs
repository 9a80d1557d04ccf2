//! Draw a reference market and summarize sizes, outcomes and prices.

use nonlinear_tariff::market::{generate_synthetic_market, GeneratorSpec};

fn main() -> nonlinear_tariff::Result<()> {
    let spec = GeneratorSpec::reference(2000);
    let drawn = generate_synthetic_market(&spec, 7)?;
    let market = &drawn.market;

    let won = market.customers.iter().filter(|c| c.success).count();
    println!("{} customers, {} won deals", market.len(), won);

    println!("size  share");
    for (size, share) in market.size_pmf().iter().take(10) {
        println!("{size:>4}  {share:.3}");
    }

    let bins = &market.bins.pricing_bins;
    for k in 0..bins.len() {
        let seg = market.pricing_segment(k);
        let won = seg.iter().filter(|&&i| market.customers[i].success).count();
        println!("bin {:>8}: {:>4} customers, win rate {:.2}", bins.label(k), seg.len(), won as f64 / seg.len().max(1) as f64);
    }
    Ok(())
}
