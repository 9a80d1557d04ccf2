use std::collections::BTreeMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mle::{fit_mle, parameter_vector, FitResult};
use super::{augment_zero_price, EstimationConfig};
use crate::error::{domain, Error, Result};
use crate::market::CustomerRecord;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub reps: usize,
    /// Replicates whose statistic failed.
    pub dropped: usize,
    pub std_errors: BTreeMap<String, f64>,
    pub lower: BTreeMap<String, f64>,
    pub upper: BTreeMap<String, f64>,
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Resamples records with replacement and summarizes a named statistic by
/// its standard deviation and 2.5/97.5 percentiles across replicates.
/// Replicate seeds are drawn in order from `seed`, so results do not depend
/// on scheduling.
pub fn bootstrap<F>(records: &[CustomerRecord], reps: usize, seed: u64, statistic: F) -> Result<BootstrapSummary>
where
    F: Fn(&[CustomerRecord]) -> Result<Vec<(String, f64)>> + Sync,
{
    if reps == 0 {
        return Ok(BootstrapSummary::default());
    }
    if records.is_empty() {
        return domain("cannot bootstrap an empty sample");
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..reps).map(|_| master.random()).collect();
    let n = records.len();
    let outcomes: Vec<Result<Vec<(String, f64)>>> = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let sample: Vec<CustomerRecord> = (0..n).map(|_| records[rng.random_range(0..n)].clone()).collect();
            statistic(&sample)
        })
        .collect();

    let mut draws: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut dropped = 0;
    for o in outcomes {
        match o {
            Ok(values) => {
                for (name, v) in values {
                    draws.entry(name).or_default().push(v);
                }
            }
            Err(e) => {
                dropped += 1;
                warn!("bootstrap replicate dropped: {e}");
            }
        }
    }

    let mut out = BootstrapSummary {
        reps,
        dropped,
        ..Default::default()
    };
    for (name, mut v) in draws {
        let m = v.len() as f64;
        let mean = v.iter().sum::<f64>() / m;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        v.sort_by(f64::total_cmp);
        out.lower.insert(name.clone(), percentile(&v, 0.025));
        out.upper.insert(name.clone(), percentile(&v, 0.975));
        out.std_errors.insert(name, sd);
    }
    Ok(out)
}

/// Bootstraps the value-model fit. `records` are the raw deals; each
/// replicate is augmented before fitting when `config.augment` is set, and
/// replicates that fail to converge are dropped.
pub fn bootstrap_fit(records: &[CustomerRecord], config: &EstimationConfig) -> Result<BootstrapSummary> {
    bootstrap(records, config.bootstrap_reps, config.seed, |sample| {
        let fit = if config.augment {
            fit_mle(&augment_zero_price(sample)?, config)?
        } else {
            fit_mle(sample, config)?
        };
        if !fit.converged {
            return Err(Error::Domain(format!(
                "fit did not converge (gradient {:.3e})",
                fit.gradient_max_norm
            )));
        }
        Ok(parameter_vector(&fit.value_model))
    })
}

impl FitResult {
    pub fn with_bootstrap(mut self, summary: &BootstrapSummary) -> Self {
        self.standard_errors = summary.std_errors.clone();
        self
    }
}
