//! Fit the value model by maximum likelihood and compare with the truth.

use nonlinear_tariff::estimation::{fit_mle, parameter_vector, EstimationConfig};
use nonlinear_tariff::market::{generate_synthetic_market, GeneratorSpec};

fn main() -> nonlinear_tariff::Result<()> {
    let spec = GeneratorSpec::recovery(20_000);
    let drawn = generate_synthetic_market(&spec, 3)?;

    let config = EstimationConfig {
        bins: spec.bins.clone(),
        covariate_names: spec.value_model.beta.iter().skip(1).map(|(n, _)| n.clone()).collect(),
        error_family: spec.value_model.error_family,
        ..EstimationConfig::default()
    };
    let fit = fit_mle(&drawn.market.customers, &config)?;
    println!("converged {} in {} iterations, -logL {:.1}", fit.converged, fit.iterations, fit.neg_log_likelihood);

    let truth = parameter_vector(&spec.value_model);
    println!("{:<24} {:>10} {:>10}", "parameter", "true", "fitted");
    for ((name, t), (_, f)) in truth.iter().zip(parameter_vector(&fit.value_model)) {
        println!("{name:<24} {t:>10.1} {f:>10.1}");
    }
    Ok(())
}
