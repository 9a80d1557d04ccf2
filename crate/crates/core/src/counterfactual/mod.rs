//! Pricing counterfactuals: perfect and group-based discrimination,
//! homogenized demand, cost sweeps, incentive-compatibility gaps and
//! recovery of value distributions from a randomized price experiment.

mod experiment;

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use experiment::{
    experimental_recovery, simulate_experiment, true_joint, total_variation, ExperimentArm, ExperimentConfig,
    ExperimentData, ExperimentRow, FilledRow, Recovery,
};

use crate::error::{domain, Result};
use crate::market::{mean_value, BinEdges, CostParams, CustomerRecord, Market, ValueModel, INTERCEPT};
use crate::profit::{
    individually_optimized, optimize_schedule, optimize_schedule_seeded, segment_linear_optima, IndividualOptimum,
    OptimizeConfig, OptimizedSchedule, ProfitReport, ScheduleFamily, SegmentReport,
};
use crate::tariff::PriceSchedule;

/// Profit and welfare of one pricing scheme, in total and by pricing bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub label: String,
    pub profit: f64,
    pub revenue: f64,
    pub consumer_welfare: f64,
    pub social_welfare: f64,
    pub per_segment: Vec<SegmentReport>,
    /// Optional `(lower, upper)` intervals by figure name, e.g. from a
    /// bootstrap.
    #[serde(default)]
    pub intervals: BTreeMap<String, (f64, f64)>,
}

impl ScenarioResult {
    pub fn from_report(label: impl Into<String>, r: &ProfitReport) -> Self {
        Self::from_segments(label, r.per_segment.clone())
    }

    /// Totals are the sums of the segments.
    pub fn from_segments(label: impl Into<String>, per_segment: Vec<SegmentReport>) -> Self {
        let profit = per_segment.iter().map(|s| s.profit).sum::<f64>();
        let cs = per_segment.iter().map(|s| s.consumer_surplus).sum::<f64>();
        Self {
            label: label.into(),
            profit,
            revenue: per_segment.iter().map(|s| s.revenue).sum(),
            consumer_welfare: cs,
            social_welfare: profit + cs,
            per_segment,
            intervals: BTreeMap::new(),
        }
    }
}

fn add_segments(acc: &mut [SegmentReport], add: &[SegmentReport]) {
    for (a, b) in acc.iter_mut().zip(add) {
        a.customers += b.customers;
        a.profit += b.profit;
        a.revenue += b.revenue;
        a.cost += b.cost;
        a.buyers += b.buyers;
        a.consumer_surplus += b.consumer_surplus;
    }
}

fn empty_segments(bins: &BinEdges) -> Vec<SegmentReport> {
    (0..bins.len())
        .map(|k| SegmentReport {
            bin: bins.label(k),
            ..Default::default()
        })
        .collect()
}

/// Perfect price discrimination: each customer is sold its full size at its
/// realized value whenever that covers the cost of serving it.
pub fn first_degree(market: &Market) -> Result<ScenarioResult> {
    let m = &market.value_model;
    m.validate_point_mass_allowed()?;
    let bins = &market.bins.pricing_bins;
    let mut seg = empty_segments(bins);
    let CostParams { c1, c2 } = market.costs;
    for c in &market.customers {
        let k = bins
            .index_of_size(c.size)
            .ok_or_else(|| crate::Error::Config(format!("size {} maps to no pricing bin", c.size)))?;
        let law = m.law(mean_value(m, c)?);
        let q = c.size as f64;
        // sale iff v * q >= c1 + c2 * q, i.e. v >= t
        let t = c2 + c1 / q;
        let buy = law.mass(t, f64::INFINITY);
        let s = &mut seg[k];
        s.customers += 1;
        s.profit += q * law.expected_excess(t);
        s.revenue += q * law.partial_expectation(t, f64::INFINITY);
        s.cost += buy * (c1 + c2 * q);
        s.buyers += buy;
    }
    Ok(ScenarioResult::from_segments("first_degree", seg))
}

/// Monte Carlo check of [`first_degree`]: mean over `draws` of the summed
/// surplus `max(v q - c1 - c2 q, 0)`.
pub fn first_degree_mc(market: &Market, draws: usize, seed: u64) -> Result<(f64, f64)> {
    let m = &market.value_model;
    m.validate_point_mass_allowed()?;
    if draws < 2 {
        return domain("Monte Carlo needs at least two draws");
    }
    let means: Vec<f64> = market.customers.iter().map(|c| mean_value(m, c)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut totals = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut t = 0.0;
        for (c, mu) in market.customers.iter().zip(&means) {
            let v = mu + m.sigma * m.error_family.sample(&mut rng);
            let q = c.size as f64;
            t += (v * q - market.costs.c1 - market.costs.c2 * q).max(0.0);
        }
        totals.push(t);
    }
    let n = draws as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Third-degree discrimination by size: every pricing segment pays its own
/// optimal linear price and cannot buy at another segment's price.
pub fn third_degree_by_size(market: &Market, config: &OptimizeConfig) -> Result<ScenarioResult> {
    let bins = &market.bins.pricing_bins;
    let mut seg = empty_segments(bins);
    for o in segment_linear_optima(market, config)?.into_iter().flatten() {
        add_segments(&mut seg, &o.report.per_segment);
    }
    if seg.iter().all(|s| s.customers == 0) {
        return domain("every pricing segment is empty");
    }
    Ok(ScenarioResult::from_segments("third_degree_size", seg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGroup {
    /// Market indices, in market order.
    pub indices: Vec<usize>,
    pub optimum: OptimizedSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGroups {
    pub groups: Vec<CovariateGroup>,
    pub result: ScenarioResult,
}

/// Splits customers into `j` equal groups by descending `beta . X` (the
/// last group takes the remainder) and optimizes a schedule for each.
/// Each group's search also starts from `seeds`; with no seeds and `j = 1`
/// the result is exactly [`optimize_schedule`] on the whole market.
pub fn third_degree_by_covariates(
    market: &Market,
    j: usize,
    family: ScheduleFamily,
    config: &OptimizeConfig,
    seeds: &[PriceSchedule],
) -> Result<CovariateGroups> {
    let n = market.len();
    if j == 0 {
        return domain("need at least one group");
    }
    if j > n {
        return domain(format!("{j} groups for {n} customers"));
    }
    let index: Vec<f64> = market
        .customers
        .iter()
        .map(|c| market.value_model.covariate_index(c))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| index[b].total_cmp(&index[a]));
    let per = n / j;
    let parts: Vec<Vec<usize>> = (0..j)
        .map(|g| {
            let end = if g + 1 == j { n } else { (g + 1) * per };
            let mut idx = order[g * per..end].to_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    let groups: Vec<CovariateGroup> = parts
        .into_par_iter()
        .map(|indices| {
            let sub = market.subset(&indices);
            let optimum = if seeds.is_empty() {
                optimize_schedule(&sub, family, config)?
            } else {
                let lin = optimize_schedule(&sub, ScheduleFamily::Linear, config)?;
                let mut s = vec![lin.schedule];
                s.extend_from_slice(seeds);
                optimize_schedule_seeded(&sub, family, config, &s)?
            };
            Ok(CovariateGroup { indices, optimum })
        })
        .collect::<Result<_>>()?;
    let mut seg = empty_segments(&market.bins.pricing_bins);
    for g in &groups {
        add_segments(&mut seg, &g.optimum.report.per_segment);
    }
    Ok(CovariateGroups {
        groups,
        result: ScenarioResult::from_segments(format!("third_degree_covariates_{j}"), seg),
    })
}

/// Replaces every customer's mean value with the population mean, leaving
/// sizes, noise and costs alone. The new model has only an intercept.
pub fn homogenize_demand(market: &Market) -> Result<Market> {
    let types = market.customer_types()?;
    if types.is_empty() {
        return domain("cannot homogenize an empty market");
    }
    let first = types[0].mean_value;
    let mean = if types.iter().all(|t| t.mean_value == first) {
        first
    } else {
        types.iter().map(|t| t.mean_value).sum::<f64>() / types.len() as f64
    };
    let old = &market.value_model;
    let value_model = ValueModel {
        beta: vec![(INTERCEPT.into(), mean)],
        year_effects: old.year_effects.keys().map(|&y| (y, 0.0)).collect(),
        size_effects: vec![0.0; old.size_effects.len()],
        ..old.clone()
    };
    let customers = market
        .customers
        .iter()
        .map(|c| CustomerRecord {
            covariates: BTreeMap::new(),
            ..c.clone()
        })
        .collect();
    Ok(Market::new(customers, value_model, market.costs, market.bins.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub costs: CostParams,
    pub optimum: OptimizedSchedule,
    /// Rate changes against the schedule optimal at the market's own costs.
    pub rate_change: Vec<f64>,
    /// `rate_change / (c2 - base c2)` per bin; empty when `c2` is unchanged.
    pub pass_through: Vec<f64>,
}

impl CostPoint {
    pub fn mean_pass_through(&self) -> Option<f64> {
        (!self.pass_through.is_empty())
            .then(|| self.pass_through.iter().sum::<f64>() / self.pass_through.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSweep {
    pub base: OptimizedSchedule,
    pub points: Vec<CostPoint>,
}

/// Re-optimizes the via-origin schedule at every `(c1, c2)` of the grid.
pub fn cost_sweep(market: &Market, c1_list: &[f64], c2_list: &[f64], config: &OptimizeConfig) -> Result<CostSweep> {
    if c1_list.is_empty() || c2_list.is_empty() {
        return domain("cost grids must be nonempty");
    }
    let base = optimize_schedule(market, ScheduleFamily::ViaOrigin, config)?;
    let grid: Vec<CostParams> = c1_list
        .iter()
        .flat_map(|&c1| c2_list.iter().map(move |&c2| CostParams::new(c1, c2)))
        .collect::<Result<_>>()?;
    let points = grid
        .into_par_iter()
        .map(|costs| {
            let optimum = optimize_schedule(&market.with_costs(costs), ScheduleFamily::ViaOrigin, config)?;
            let rate_change: Vec<f64> = optimum
                .schedule
                .rates
                .iter()
                .zip(&base.schedule.rates)
                .map(|(a, b)| a - b)
                .collect();
            let dc2 = costs.c2 - market.costs.c2;
            let pass_through = if dc2 != 0.0 {
                rate_change.iter().map(|d| d / dc2).collect()
            } else {
                Vec::new()
            };
            Ok(CostPoint {
                costs,
                optimum,
                rate_change,
                pass_through,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CostSweep { base, points })
}

/// With probability `p` per record (drawn in record order), overwrites
/// `success` with membership of the record's size in estimation bin
/// `favored`; `inverted` swaps the two outcomes.
pub fn simulate_counterfactual_outcomes(
    records: &[CustomerRecord],
    p: f64,
    bins: &BinEdges,
    favored: usize,
    inverted: bool,
    seed: u64,
) -> Result<Vec<CustomerRecord>> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("flip probability must lie in [0, 1], got {p}"));
    }
    if favored >= bins.len() {
        return domain(format!("bin {favored} out of range for {} bins", bins.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if rng.random_bool(p) {
                r.success = bins.contains(favored, r.size) != inverted;
            }
            r
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentGap {
    pub bin: String,
    pub optimal_profit: f64,
    pub individual_profit: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcGap {
    pub optimal: OptimizedSchedule,
    pub individual: IndividualOptimum,
    /// `sum_k pi_k`, each segment at its own linear optimum.
    pub third_degree_profit: f64,
    pub gap: f64,
    /// `gap / pi(P*)`.
    pub relative_gap: f64,
    pub segments: Vec<SegmentGap>,
}

fn spread(rates: &[f64]) -> f64 {
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

impl IcGap {
    pub fn optimal_spread(&self) -> f64 {
        spread(&self.optimal.schedule.rates)
    }

    pub fn individual_spread(&self) -> f64 {
        spread(&self.individual.schedule.rates)
    }
}

/// How much the jointly optimized via-origin schedule `P*` earns over the
/// schedule assembled from per-segment linear optima `P~`, by segment.
/// The search for `P*` starts from the optimal linear price and from `P~`.
pub fn ic_gap_analysis(market: &Market, config: &OptimizeConfig) -> Result<IcGap> {
    let individual = individually_optimized(market, config)?;
    let linear = optimize_schedule(market, ScheduleFamily::Linear, config)?;
    let optimal = optimize_schedule_seeded(
        market,
        ScheduleFamily::ViaOrigin,
        config,
        &[linear.schedule, individual.schedule.clone()],
    )?;
    let segments: Vec<SegmentGap> = optimal
        .report
        .per_segment
        .iter()
        .zip(&individual.report.per_segment)
        .map(|(a, b)| SegmentGap {
            bin: a.bin.clone(),
            optimal_profit: a.profit,
            individual_profit: b.profit,
            difference: a.profit - b.profit,
        })
        .collect();
    let gap = optimal.report.expected_profit - individual.true_profit;
    Ok(IcGap {
        third_degree_profit: individual.naive_profit,
        relative_gap: gap / optimal.report.expected_profit,
        gap,
        segments,
        optimal,
        individual,
    })
}

/// Profits along the chain linear optimum, assembled segment prices,
/// optimal via-origin schedule, segment-by-segment linear optima and
/// perfect discrimination, which weakly increase on well-behaved markets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingChain {
    pub linear: ScenarioResult,
    pub individual: ScenarioResult,
    pub optimal: ScenarioResult,
    pub third_degree: ScenarioResult,
    pub first_degree: ScenarioResult,
}

impl OrderingChain {
    pub fn profits(&self) -> [f64; 5] {
        [
            self.linear.profit,
            self.individual.profit,
            self.optimal.profit,
            self.third_degree.profit,
            self.first_degree.profit,
        ]
    }

    /// Smallest step along the chain; negative when the order breaks.
    pub fn min_slack(&self) -> f64 {
        self.profits().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn scenarios(&self) -> [&ScenarioResult; 5] {
        [
            &self.linear,
            &self.individual,
            &self.optimal,
            &self.third_degree,
            &self.first_degree,
        ]
    }
}

pub fn ordering_chain(market: &Market, config: &OptimizeConfig) -> Result<OrderingChain> {
    let ic = ic_gap_analysis(market, config)?;
    let linear = optimize_schedule(market, ScheduleFamily::Linear, config)?;
    Ok(OrderingChain {
        linear: ScenarioResult::from_report("linear", &linear.report),
        individual: ScenarioResult::from_report("individually_optimized", &ic.individual.report),
        optimal: ScenarioResult::from_report("via_origin", &ic.optimal.report),
        third_degree: third_degree_by_size(market, config)?,
        first_degree: first_degree(market)?,
    })
}

/// One row per scenario: label, profit, revenue, consumer and social welfare,
/// and the profit change against the optimal linear price. The comparison
/// base is named in the header and the column is empty without a `linear`
/// row.
pub fn write_scenario_csv<W: Write>(scenarios: &[&ScenarioResult], out: W) -> Result<()> {
    let base = scenarios.iter().find(|s| s.label == "linear").map(|s| s.profit);
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scheme",
        "profit",
        "revenue",
        "consumer_welfare",
        "social_welfare",
        "profit_vs_linear_pct",
    ])?;
    for s in scenarios {
        let change = match base {
            Some(b) if b != 0.0 => format!("{:.2}", 100.0 * (s.profit - b) / b.abs()),
            _ => String::new(),
        };
        w.write_record([
            s.label.clone(),
            format!("{:.2}", s.profit),
            format!("{:.2}", s.revenue),
            format!("{:.2}", s.consumer_welfare),
            format!("{:.2}", s.social_welfare),
            change,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per scenario and pricing bin.
pub fn write_segment_csv<W: Write>(scenarios: &[&ScenarioResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "bin", "customers", "profit", "revenue", "buyers", "consumer_welfare"])?;
    for s in scenarios {
        for g in &s.per_segment {
            w.write_record([
                s.label.clone(),
                g.bin.clone(),
                g.customers.to_string(),
                format!("{:.2}", g.profit),
                format!("{:.2}", g.revenue),
                format!("{:.4}", g.buyers),
                format!("{:.2}", g.consumer_surplus),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
