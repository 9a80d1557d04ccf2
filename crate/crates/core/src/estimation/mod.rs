//! Recovering the joint law of values and sizes from won and lost deals.

mod bootstrap;
mod mle;

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap, bootstrap_fit, percentile, BootstrapSummary};
pub use mle::{fit_mle, log_likelihood, parameter_vector, FitResult};

use crate::error::{domain, Result};
use crate::market::{mean_value, CostParams, CustomerRecord, ErrorFamily, SizeBinConfig, ValueModel};
use crate::tariff::{is_concave_increasing, PriceSchedule, DEFAULT_Q_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationConfig {
    pub error_family: ErrorFamily,
    pub bins: SizeBinConfig,
    /// Regressors besides the intercept, in coefficient order.
    pub covariate_names: Vec<String>,
    /// Stop when the largest gradient entry of the mean negative
    /// log-likelihood falls below this.
    pub optimizer_tolerance: f64,
    pub sigma_floor: f64,
    pub max_iterations: usize,
    /// Random restarts on top of the moment-based start.
    pub restarts: usize,
    /// Whether pipelines built on the fit (bootstrap, CLI) append the
    /// zero-price copies before fitting.
    pub augment: bool,
    pub bootstrap_reps: usize,
    pub seed: u64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            error_family: ErrorFamily::Logistic,
            bins: SizeBinConfig::default(),
            covariate_names: Vec::new(),
            optimizer_tolerance: 1e-12,
            sigma_floor: 1e-6,
            max_iterations: 200,
            restarts: 4,
            augment: true,
            bootstrap_reps: 0,
            seed: 0,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_floor > 0.0) {
            return domain("sigma floor must be positive");
        }
        if !(self.optimizer_tolerance > 0.0) {
            return domain("optimizer tolerance must be positive");
        }
        Ok(())
    }
}

/// Size distribution with one unit of weight per record, won and lost deals
/// pooled.
pub fn empirical_size_distribution(records: &[CustomerRecord]) -> Result<BTreeMap<u32, f64>> {
    if records.is_empty() {
        return domain("cannot build a size distribution from no records");
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.size).or_insert(0) += 1;
    }
    let n = records.len() as f64;
    Ok(counts.into_iter().map(|(s, c)| (s, c as f64 / n)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<CustomerRecord>,
    pub dropped: usize,
}

/// Drops records whose size sits where the observed schedule is not
/// monotone, since such a customer would have bought more units for less.
pub fn filter_concavity_dips(records: &[CustomerRecord], observed: &PriceSchedule) -> Result<FilterOutcome> {
    let q_max = records.iter().map(|r| r.size).max().unwrap_or(0).max(DEFAULT_Q_MAX);
    let report = is_concave_increasing(observed, q_max)?;
    let kept: Vec<CustomerRecord> = records
        .iter()
        .filter(|r| report.dips.binary_search(&r.size).is_err())
        .cloned()
        .collect();
    let dropped = records.len() - kept.len();
    if kept.is_empty() && !records.is_empty() {
        warn!("every record lies in a price dip; nothing left to estimate from");
    }
    Ok(FilterOutcome { kept, dropped })
}

/// True when the second half repeats the first with price 0 and success 1.
pub fn is_augmented(records: &[CustomerRecord]) -> bool {
    let n = records.len();
    if n == 0 || n % 2 == 1 {
        return false;
    }
    let (head, tail) = records.split_at(n / 2);
    head.iter().zip(tail).all(|(a, b)| {
        a.id == b.id && a.size == b.size && a.year == b.year && b.observed_unit_price == 0.0 && b.success
    })
}

/// Appends a zero-price success copy of every record, which pins down the
/// level of values: everyone takes the good for free.
pub fn augment_zero_price(records: &[CustomerRecord]) -> Result<Vec<CustomerRecord>> {
    if is_augmented(records) {
        return domain("records already carry zero-price copies");
    }
    let mut out = records.to_vec();
    out.extend(records.iter().map(|r| CustomerRecord {
        observed_unit_price: 0.0,
        success: true,
        ..r.clone()
    }));
    Ok(out)
}

/// Probability that the customer's value is at least the price it faced.
pub fn success_probability(m: &ValueModel, c: &CustomerRecord) -> Result<f64> {
    if !(m.sigma > 0.0) {
        return domain(format!("sigma must be positive, got {}", m.sigma));
    }
    let z = (c.observed_unit_price - mean_value(m, c)?) / m.sigma;
    Ok(m.error_family.cdf(-z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostCalibration {
    /// `$/customer` incurred on every closed deal.
    pub setup_cost: f64,
    /// Share of service-and-consulting cost treated as per customer; the
    /// rest is spread over units.
    pub snc_fixed_share: f64,
    pub per_unit_cost: f64,
}

impl Default for CostCalibration {
    fn default() -> Self {
        Self {
            setup_cost: 1253.0,
            snc_fixed_share: 0.65,
            per_unit_cost: 601.0,
        }
    }
}

pub fn calibrate_costs(records: &[CustomerRecord], cal: &CostCalibration) -> Result<CostParams> {
    let won: Vec<&CustomerRecord> = records.iter().filter(|r| r.success).collect();
    if won.is_empty() {
        return domain("cost calibration needs at least one successful deal");
    }
    if !(0.0..=1.0).contains(&cal.snc_fixed_share) {
        return domain(format!("fixed share must lie in [0, 1], got {}", cal.snc_fixed_share));
    }
    let snc: f64 = won.iter().map(|r| r.snc_value).sum();
    let units: f64 = won.iter().map(|r| r.size as f64).sum();
    let c1 = cal.setup_cost + cal.snc_fixed_share * snc / won.len() as f64;
    let c2 = cal.per_unit_cost + (1.0 - cal.snc_fixed_share) * snc / units;
    CostParams::new(c1, c2)
}
