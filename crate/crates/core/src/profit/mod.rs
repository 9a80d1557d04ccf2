//! Expected profit of a posted schedule and the search for good schedules.
//!
//! Profit is integrated exactly over each customer's value law by cutting
//! the value axis at the envelope breakpoints, or estimated by Monte Carlo
//! with common random numbers. The two share nothing beyond the schedule
//! evaluation, which makes one a check on the other.

mod grid;
mod nelder_mead;
mod search;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use grid::{grid_bisection, grid_bisection_seeded, GridBisectionConfig, GridTrace, GridTraceRow, Optimum};
pub use nelder_mead::{nelder_mead, NelderMeadConfig};
pub use search::{
    fixed_fee_analysis, individually_optimized, optimize_schedule, optimize_schedule_seeded,
    FixedFeeAnalysis, IndividualOptimum, OptimizeConfig, OptimizedSchedule, Optimizer, ScheduleFamily,
};
pub(crate) use search::segment_linear_optima;

use crate::choice::{solve_purchase_unchecked, value_envelope_unchecked, PurchaseTable, ValueEnvelope};
use crate::error::{Error, Result};
use crate::market::{gross_value_unchecked, CostParams, ErrorFamily, Market, ValueLaw};
use crate::tariff::{PriceSchedule, ScheduleKind, DEFAULT_Q_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfitMethod {
    Envelope,
    MonteCarlo,
}

/// Totals for the customers whose size falls in one pricing bin.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub bin: String,
    pub customers: usize,
    pub profit: f64,
    pub revenue: f64,
    pub cost: f64,
    /// Expected number of buyers.
    pub buyers: f64,
    pub consumer_surplus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitReport {
    pub expected_profit: f64,
    pub expected_revenue: f64,
    pub expected_cost: f64,
    pub consumer_surplus: f64,
    pub per_segment: Vec<SegmentReport>,
    pub method: ProfitMethod,
    pub mc_std_error: Option<f64>,
}

impl ProfitReport {
    pub fn social_welfare(&self) -> f64 {
        self.expected_profit + self.consumer_surplus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Welfare {
    pub profit: f64,
    pub consumer_surplus: f64,
    pub social_welfare: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub draws: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { draws: 20_000, seed: 0 }
    }
}

struct SizeGroup {
    size: u32,
    segment: usize,
    means: Vec<f64>,
}

/// Market data pre-digested for repeated profit evaluations: customers
/// grouped by size, so each schedule needs one envelope per distinct size.
pub struct ProfitEvaluator {
    groups: Vec<SizeGroup>,
    /// Customer order: `(group, position)`; the Monte Carlo path draws
    /// shocks in this order.
    order: Vec<(usize, usize)>,
    segment_labels: Vec<String>,
    segment_counts: Vec<usize>,
    sigma: f64,
    family: ErrorFamily,
    alpha: f64,
    costs: CostParams,
    q_max: u32,
}

fn check_schedule(schedule: &PriceSchedule) -> Result<()> {
    if schedule.kind == ScheduleKind::Individualized {
        return Err(Error::Unsupported(
            "individualized pricing is evaluated per customer, not as a posted schedule".into(),
        ));
    }
    schedule.validate()
}

impl ProfitEvaluator {
    pub fn new(market: &Market) -> Result<Self> {
        market.value_model.validate_point_mass_allowed()?;
        let types = market.customer_types()?;
        let bins = &market.bins.pricing_bins;
        let mut index: BTreeMap<u32, usize> = BTreeMap::new();
        let mut groups: Vec<SizeGroup> = Vec::new();
        let mut order = Vec::with_capacity(types.len());
        let mut segment_counts = vec![0; bins.len()];
        for t in &types {
            if t.size == 0 {
                return Err(Error::Domain("customer size must be at least 1".into()));
            }
            let g = match index.get(&t.size) {
                Some(&g) => g,
                None => {
                    let segment = bins
                        .index_of_size(t.size)
                        .ok_or_else(|| Error::Config(format!("size {} maps to no pricing bin", t.size)))?;
                    groups.push(SizeGroup {
                        size: t.size,
                        segment,
                        means: Vec::new(),
                    });
                    index.insert(t.size, groups.len() - 1);
                    groups.len() - 1
                }
            };
            order.push((g, groups[g].means.len()));
            groups[g].means.push(t.mean_value);
            segment_counts[groups[g].segment] += 1;
        }
        Ok(Self {
            groups,
            order,
            segment_labels: (0..bins.len()).map(|k| bins.label(k)).collect(),
            segment_counts,
            sigma: market.value_model.sigma,
            family: market.value_model.error_family,
            alpha: market.value_model.smoothness,
            costs: market.costs,
            q_max: DEFAULT_Q_MAX,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn smoothness(&self) -> f64 {
        self.alpha
    }

    fn law(&self, mean: f64) -> ValueLaw {
        ValueLaw {
            mean,
            sigma: self.sigma,
            family: self.family,
        }
    }

    fn envelope(&self, size: u32, schedule: &PriceSchedule) -> ValueEnvelope {
        value_envelope_unchecked(size, schedule, self.q_max)
    }

    /// Expected profit only; the fast path used inside searches.
    pub fn profit(&self, schedule: &PriceSchedule) -> Result<f64> {
        check_schedule(schedule)?;
        if self.alpha != 1.0 {
            return Err(Error::Unsupported(
                "exact integration needs the piecewise-linear value function; use Monte Carlo".into(),
            ));
        }
        let mut total = 0.0;
        let mut cdf = Vec::new();
        for g in &self.groups {
            let env = self.envelope(g.size, schedule);
            let net: Vec<f64> = env
                .winning_quantity
                .iter()
                .zip(&env.payment)
                .map(|(&q, &p)| p - self.costs.serve(q as f64))
                .collect();
            for &mu in &g.means {
                let law = self.law(mu);
                cdf.clear();
                cdf.extend(env.breakpoints.iter().map(|&b| law.prob_below(b)));
                let mut acc = 0.0;
                for (j, n) in net.iter().enumerate().skip(1) {
                    let hi = cdf.get(j).copied().unwrap_or(1.0);
                    acc += (hi - cdf[j - 1]) * n;
                }
                total += acc;
            }
        }
        Ok(total)
    }

    /// Full report by exact integration.
    pub fn report(&self, schedule: &PriceSchedule) -> Result<ProfitReport> {
        check_schedule(schedule)?;
        if self.alpha != 1.0 {
            return Err(Error::Unsupported(
                "exact integration needs the piecewise-linear value function; use Monte Carlo".into(),
            ));
        }
        let mut seg: Vec<SegmentReport> = self.empty_segments();
        for g in &self.groups {
            let env = self.envelope(g.size, schedule);
            let s = &mut seg[g.segment];
            for &mu in &g.means {
                let law = self.law(mu);
                for j in 1..env.len() {
                    let (lo, hi) = env.bounds(j);
                    let q = env.winning_quantity[j];
                    let pay = env.payment[j];
                    let mass = law.mass(lo, hi);
                    let cost = self.costs.serve(q as f64);
                    s.revenue += mass * pay;
                    s.cost += mass * cost;
                    s.profit += mass * (pay - cost);
                    s.buyers += mass;
                    s.consumer_surplus += q.min(g.size) as f64 * law.partial_expectation(lo, hi) - pay * mass;
                }
            }
        }
        Ok(self.assemble(seg, ProfitMethod::Envelope, None))
    }

    fn empty_segments(&self) -> Vec<SegmentReport> {
        self.segment_labels
            .iter()
            .zip(&self.segment_counts)
            .map(|(l, &c)| SegmentReport {
                bin: l.clone(),
                customers: c,
                ..Default::default()
            })
            .collect()
    }

    fn assemble(&self, seg: Vec<SegmentReport>, method: ProfitMethod, se: Option<f64>) -> ProfitReport {
        ProfitReport {
            expected_profit: seg.iter().map(|s| s.profit).sum(),
            expected_revenue: seg.iter().map(|s| s.revenue).sum(),
            expected_cost: seg.iter().map(|s| s.cost).sum(),
            consumer_surplus: seg.iter().map(|s| s.consumer_surplus).sum(),
            per_segment: seg,
            method,
            mc_std_error: se,
        }
    }

    /// Monte Carlo estimate. Draw `r` uses its own ChaCha stream of `seed`
    /// and visits customers in market order, so two schedules evaluated
    /// with the same seed see identical values.
    pub fn report_mc(&self, schedule: &PriceSchedule, mc: &McConfig) -> Result<ProfitReport> {
        check_schedule(schedule)?;
        if mc.draws == 0 {
            return Err(Error::Domain("Monte Carlo needs at least one draw".into()));
        }
        let nseg = self.segment_labels.len();
        // [profit, revenue, cost, buyers, cs] per segment
        let mut sums = vec![0.0; nseg * 5];
        let mut total_sq = 0.0;
        let mut total_sum = 0.0;
        let tables: Vec<Option<PurchaseTable>> = self
            .groups
            .iter()
            .map(|g| (self.alpha == 1.0).then(|| PurchaseTable::new(g.size, schedule, self.q_max)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
        for r in 0..mc.draws {
            rng.set_stream(r as u64);
            rng.set_word_pos(0);
            let mut draw_total = 0.0;
            for &(g, i) in &self.order {
                let group = &self.groups[g];
                let v = group.means[i] + self.sigma * self.family.sample(&mut rng);
                let d = match &tables[g] {
                    Some(t) => t.decide(v),
                    None => solve_purchase_unchecked(v, group.size, schedule, self.alpha, self.q_max),
                };
                if d.bought {
                    let cost = self.costs.serve(d.quantity as f64);
                    let gross = gross_value_unchecked(self.alpha, v, group.size, d.quantity as f64);
                    let s = &mut sums[group.segment * 5..group.segment * 5 + 5];
                    s[0] += d.payment - cost;
                    s[1] += d.payment;
                    s[2] += cost;
                    s[3] += 1.0;
                    s[4] += gross - d.payment;
                    draw_total += d.payment - cost;
                }
            }
            total_sum += draw_total;
            total_sq += draw_total * draw_total;
        }
        let rf = mc.draws as f64;
        let mean = total_sum / rf;
        let var = if mc.draws > 1 {
            ((total_sq - rf * mean * mean) / (rf - 1.0)).max(0.0)
        } else {
            0.0
        };
        let mut seg = self.empty_segments();
        for (k, s) in seg.iter_mut().enumerate() {
            let a = &sums[k * 5..k * 5 + 5];
            s.profit = a[0] / rf;
            s.revenue = a[1] / rf;
            s.cost = a[2] / rf;
            s.buyers = a[3] / rf;
            s.consumer_surplus = a[4] / rf;
        }
        Ok(self.assemble(seg, ProfitMethod::MonteCarlo, Some((var / rf).sqrt())))
    }
}

/// Expected profit, exact for the piecewise-linear value function and by
/// Monte Carlo with default draws otherwise.
pub fn expected_profit(market: &Market, schedule: &PriceSchedule) -> Result<ProfitReport> {
    let ev = ProfitEvaluator::new(market)?;
    if ev.alpha == 1.0 {
        ev.report(schedule)
    } else {
        ev.report_mc(schedule, &McConfig::default())
    }
}

pub fn expected_profit_mc(market: &Market, schedule: &PriceSchedule, mc: &McConfig) -> Result<ProfitReport> {
    ProfitEvaluator::new(market)?.report_mc(schedule, mc)
}

/// Consumer surplus and social welfare; social is profit plus surplus by
/// construction.
pub fn welfare(market: &Market, schedule: &PriceSchedule) -> Result<Welfare> {
    let r = expected_profit(market, schedule)?;
    Ok(Welfare {
        profit: r.expected_profit,
        consumer_surplus: r.consumer_surplus,
        social_welfare: r.social_welfare(),
    })
}
