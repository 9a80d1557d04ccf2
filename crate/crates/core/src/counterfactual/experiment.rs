//! A randomized price experiment and the recovery of value-stratified
//! size and covariate distributions from it.
//!
//! Each row faces one posted per-unit price drawn at random from a set of
//! arms and buys iff its value covers it; sizes are seen only for buyers.
//! Arm 0 reveals the joint law `g` of (size, covariates). At every other
//! arm the buyers reveal `g(.|v >= p)` and the success share reveals
//! `P(v >= p)`, so `g(.|v < p)` follows from total probability.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::market::{mean_value, CustomerRecord, Market, INTERCEPT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub rows: usize,
    /// Arm prices, `$/unit`; must include 0.
    pub arm_prices: Vec<f64>,
    /// Covariate whose quantiles define the covariate groups; defaults to
    /// the first non-intercept covariate of the value model.
    pub covariate: Option<String>,
    pub covariate_groups: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rows: 1_000_000,
            arm_prices: vec![0.0, 1000.0, 2000.0, 3000.0, 4000.0, 5000.0],
            covariate: None,
            covariate_groups: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    /// Market customer this row copies.
    pub customer: u32,
    pub arm: u8,
    pub success: bool,
    /// Observed for buyers only.
    pub size: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentArm {
    pub price: f64,
    /// Row indices assigned to the arm.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentData {
    pub arm_prices: Vec<f64>,
    pub rows: Vec<ExperimentRow>,
    /// Cell of each market customer: pricing bin times covariate group.
    pub customer_cell: Vec<usize>,
    pub cell_labels: Vec<String>,
    /// Realized values, kept only to score the recovery.
    pub latent_values: Vec<f64>,
}

impl ExperimentData {
    pub fn arms(&self) -> Vec<ExperimentArm> {
        let mut arms: Vec<ExperimentArm> = self
            .arm_prices
            .iter()
            .map(|&price| ExperimentArm { price, rows: Vec::new() })
            .collect();
        for (i, r) in self.rows.iter().enumerate() {
            arms[r.arm as usize].rows.push(i);
        }
        arms
    }

    /// Value strata cut at the positive arm prices: `[-inf, p1)`, ...,
    /// `[pm, inf)`.
    pub fn stratum_edges(&self) -> Vec<f64> {
        positive_arms(&self.arm_prices).into_iter().map(|(_, p)| p).collect()
    }

    pub fn stratum_labels(&self) -> Vec<String> {
        let e = self.stratum_edges();
        (0..=e.len())
            .map(|s| match (s.checked_sub(1).map(|i| e[i]), e.get(s)) {
                (None, Some(hi)) => format!("v<{hi}"),
                (Some(lo), Some(hi)) => format!("{lo}<=v<{hi}"),
                (Some(lo), None) => format!("v>={lo}"),
                (None, None) => "all".into(),
            })
            .collect()
    }
}

fn positive_arms(prices: &[f64]) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = prices.iter().copied().enumerate().filter(|(_, p)| *p > 0.0).collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1));
    v
}

fn group_covariate(market: &Market, config: &ExperimentConfig) -> Option<String> {
    config.covariate.clone().or_else(|| {
        market
            .value_model
            .beta
            .iter()
            .map(|(n, _)| n)
            .find(|n| n.as_str() != INTERCEPT && market.customers.iter().all(|c| c.covariates.contains_key(*n)))
            .cloned()
    })
}

fn assign_cells(market: &Market, config: &ExperimentConfig) -> Result<(Vec<usize>, Vec<String>)> {
    let bins = &market.bins.pricing_bins;
    let cov = group_covariate(market, config);
    let groups = if cov.is_some() { config.covariate_groups.max(1) } else { 1 };
    let xs: Vec<f64> = match &cov {
        Some(name) => market
            .customers
            .iter()
            .map(|c| {
                c.covariates
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("customer `{}` is missing covariate `{name}`", c.id)))
            })
            .collect::<Result<_>>()?,
        None => vec![0.0; market.len()],
    };
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..groups).map(|g| sorted[g * sorted.len() / groups]).collect();
    let cells = market
        .customers
        .iter()
        .zip(&xs)
        .map(|(c, x)| {
            let k = bins
                .index_of_size(c.size)
                .ok_or_else(|| Error::Config(format!("size {} maps to no pricing bin", c.size)))?;
            Ok(k * groups + cuts.iter().filter(|&&t| t <= *x).count())
        })
        .collect::<Result<_>>()?;
    let name = cov.unwrap_or_default();
    let labels = (0..bins.len())
        .flat_map(|k| {
            let name = name.clone();
            (0..groups).map(move |g| {
                if groups == 1 {
                    bins.label(k)
                } else {
                    format!("{} {name}#{g}", bins.label(k))
                }
            })
        })
        .collect();
    Ok((cells, labels))
}

/// Draws `config.rows` experiment rows cycling through the market's
/// customers, each with a fresh value and a uniformly random arm.
pub fn simulate_experiment(market: &Market, config: &ExperimentConfig) -> Result<ExperimentData> {
    let m = &market.value_model;
    m.validate_point_mass_allowed()?;
    if market.is_empty() || config.rows == 0 {
        return domain("experiment needs customers and rows");
    }
    if config.arm_prices.is_empty() || config.arm_prices.len() > u8::MAX as usize {
        return domain("between 1 and 255 arms are required");
    }
    if config.arm_prices.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return domain("arm prices must be nonnegative");
    }
    let (customer_cell, cell_labels) = assign_cells(market, config)?;
    let means: Vec<f64> = market.customers.iter().map(|c| mean_value(m, c)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = market.len();
    let mut rows = Vec::with_capacity(config.rows);
    let mut latent = Vec::with_capacity(config.rows);
    for r in 0..config.rows {
        let i = r % n;
        let arm = rng.random_range(0..config.arm_prices.len());
        let v = means[i] + m.sigma * m.error_family.sample(&mut rng);
        let success = v >= config.arm_prices[arm];
        rows.push(ExperimentRow {
            customer: i as u32,
            arm: arm as u8,
            success,
            size: success.then_some(market.customers[i].size),
        });
        latent.push(v);
    }
    Ok(ExperimentData {
        arm_prices: config.arm_prices.clone(),
        rows,
        customer_cell,
        cell_labels,
        latent_values: latent,
    })
}

/// A failed row given a size and covariates borrowed from an arm-0 buyer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilledRow {
    pub row: usize,
    /// Market customer whose size and covariates are borrowed.
    pub donor: usize,
    pub size: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub cell_labels: Vec<String>,
    pub stratum_labels: Vec<String>,
    /// Law of the cells among arm-0 buyers.
    pub marginal: Vec<f64>,
    /// `P(v >= p)` per arm, in arm order.
    pub success_share: Vec<f64>,
    /// `g(.|v < p)` per arm; `None` for arm 0 and skipped arms.
    pub below: Vec<Option<Vec<f64>>>,
    /// Joint mass of (cell, value stratum), indexed `[cell][stratum]`.
    pub joint: Vec<Vec<f64>>,
    /// Arms whose failure distribution is undefined, with the reason.
    pub skipped_arms: Vec<(f64, String)>,
    pub warnings: Vec<String>,
    pub filled: Vec<FilledRow>,
}

impl Recovery {
    /// The experiment as deal records: buyers as observed, failures with a
    /// borrowed size and covariates, every row priced at its arm.
    pub fn filled_records(&self, data: &ExperimentData, market: &Market) -> Vec<CustomerRecord> {
        let mut donor = vec![None; data.rows.len()];
        for f in &self.filled {
            donor[f.row] = Some(f.donor);
        }
        data.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let own = &market.customers[r.customer as usize];
                let src = match (r.success, donor[i]) {
                    (true, _) => own,
                    (false, Some(d)) => &market.customers[d],
                    (false, None) => return None,
                };
                Some(CustomerRecord {
                    id: format!("x{i}"),
                    year: own.year,
                    covariates: src.covariates.clone(),
                    size: src.size,
                    success: r.success,
                    observed_unit_price: data.arm_prices[r.arm as usize],
                    snc_value: 0.0,
                })
            })
            .collect()
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
        true
    } else {
        false
    }
}

fn draw(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Recovers the joint law of (cell, value stratum) and fills the sizes of
/// failed rows. Negative masses from sampling noise are clipped and the
/// rest renormalized, with a warning.
pub fn experimental_recovery(data: &ExperimentData, seed: u64) -> Result<Recovery> {
    let zero = data
        .arm_prices
        .iter()
        .position(|p| *p == 0.0)
        .ok_or_else(|| Error::Domain("the arm set must include a zero price".into()))?;
    let ncell = data.cell_labels.len();
    let narm = data.arm_prices.len();
    let mut counts = vec![vec![0.0; ncell]; narm];
    let mut rows_per_arm = vec![0usize; narm];
    let mut buyers = vec![0usize; narm];
    for r in &data.rows {
        let a = r.arm as usize;
        rows_per_arm[a] += 1;
        if r.success {
            buyers[a] += 1;
            counts[a][data.customer_cell[r.customer as usize]] += 1.0;
        }
    }
    if let Some(a) = rows_per_arm.iter().position(|&n| n == 0) {
        return domain(format!("arm at price {} has no rows", data.arm_prices[a]));
    }
    if buyers[zero] == 0 {
        return domain("nobody bought at the zero price");
    }
    let mut warnings = Vec::new();
    let mut marginal = counts[zero].clone();
    normalize(&mut marginal);
    let success_share: Vec<f64> = (0..narm).map(|a| buyers[a] as f64 / rows_per_arm[a] as f64).collect();

    let mut below: Vec<Option<Vec<f64>>> = vec![None; narm];
    let mut skipped_arms = Vec::new();
    for (a, price) in positive_arms(&data.arm_prices) {
        let s = success_share[a];
        let fail = 1.0 - s;
        if fail <= 0.0 {
            let why = format!("every row bought at price {price}; the failure distribution is undefined");
            warn!("{why}");
            skipped_arms.push((price, why));
            continue;
        }
        let mut above = counts[a].clone();
        normalize(&mut above);
        let mut g: Vec<f64> = marginal.iter().zip(&above).map(|(m, h)| (m - h * s) / fail).collect();
        let clipped = g.iter().filter(|x| **x < 0.0).count();
        if clipped > 0 {
            g.iter_mut().for_each(|x| *x = x.max(0.0));
            warnings.push(format!("price {price}: clipped {clipped} negative cell masses"));
        }
        if !normalize(&mut g) {
            warnings.push(format!("price {price}: no failure mass left after clipping"));
        }
        below[a] = Some(g);
    }
    for w in &warnings {
        warn!("{w}");
    }

    // cumulative mass below each stratum edge, then differences
    let edges = positive_arms(&data.arm_prices);
    let cum: Vec<Vec<f64>> = edges
        .iter()
        .map(|&(a, _)| match &below[a] {
            Some(g) => g.iter().map(|x| x * (1.0 - success_share[a])).collect(),
            None => vec![0.0; ncell],
        })
        .collect();
    let mut joint = vec![vec![0.0; edges.len() + 1]; ncell];
    let mut clipped = false;
    for c in 0..ncell {
        let mut prev = 0.0;
        for (s, row) in cum.iter().enumerate() {
            let d = row[c] - prev;
            clipped |= d < 0.0;
            joint[c][s] = d.max(0.0);
            prev = prev.max(row[c]);
        }
        let d = marginal[c] - prev;
        clipped |= d < 0.0;
        joint[c][edges.len()] = d.max(0.0);
    }
    let total: f64 = joint.iter().flatten().sum();
    if total > 0.0 {
        joint.iter_mut().flatten().for_each(|x| *x /= total);
    }
    if clipped {
        let w = "stratum masses clipped at zero and renormalized".to_string();
        warn!("{w}");
        warnings.push(w);
    }

    // fill the failures: draw a cell from g(.|v < p), then an arm-0 buyer in it
    let mut donors: Vec<Vec<(usize, u32)>> = vec![Vec::new(); ncell];
    for r in data.rows.iter().filter(|r| r.arm as usize == zero) {
        if let Some(size) = r.size {
            donors[data.customer_cell[r.customer as usize]].push((r.customer as usize, size));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut filled = Vec::new();
    for (i, r) in data.rows.iter().enumerate().filter(|(_, r)| !r.success) {
        let a = r.arm as usize;
        // failures at price 0 carry no information beyond the marginal
        let weights = if a == zero { Some(&marginal) } else { below[a].as_ref() };
        let Some(w) = weights else { continue };
        let cell = draw(w, &mut rng);
        let pool = &donors[cell];
        if pool.is_empty() {
            continue;
        }
        let (donor, size) = pool[rng.random_range(0..pool.len())];
        filled.push(FilledRow { row: i, donor, size });
    }
    Ok(Recovery {
        cell_labels: data.cell_labels.clone(),
        stratum_labels: data.stratum_labels(),
        marginal,
        success_share,
        below,
        joint,
        skipped_arms,
        warnings,
        filled,
    })
}

/// Exact joint law of (cell, value stratum) over the experiment's rows.
pub fn true_joint(market: &Market, data: &ExperimentData) -> Result<Vec<Vec<f64>>> {
    let m = &market.value_model;
    let edges = data.stratum_edges();
    let ncell = data.cell_labels.len();
    let mut weight = vec![0usize; market.len()];
    for r in &data.rows {
        weight[r.customer as usize] += 1;
    }
    let n = data.rows.len() as f64;
    let mut joint = vec![vec![0.0; edges.len() + 1]; ncell];
    for (i, c) in market.customers.iter().enumerate() {
        if weight[i] == 0 {
            continue;
        }
        let law = m.law(mean_value(m, c)?);
        let w = weight[i] as f64 / n;
        let cell = data.customer_cell[i];
        let mut lo = f64::NEG_INFINITY;
        for (s, hi) in edges.iter().copied().chain(std::iter::once(f64::INFINITY)).enumerate() {
            joint[cell][s] += w * law.mass(lo, hi);
            lo = hi;
        }
    }
    Ok(joint)
}

/// Half the L1 distance between two tables of probabilities.
pub fn total_variation(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    0.5 * a
        .iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}
