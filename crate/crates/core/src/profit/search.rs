//! Profit-maximizing schedules within a family, and the schedule that
//! prices each size segment as if it were its own market.

use serde::{Deserialize, Serialize};

use super::grid::{grid_bisection_seeded, GridBisectionConfig, GridTrace};
use super::nelder_mead::{nelder_mead, NelderMeadConfig};
use super::{McConfig, ProfitEvaluator, ProfitReport};
use crate::error::{domain, Result};
use crate::market::{BinEdges, Market};
use crate::tariff::{PriceSchedule, ScheduleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleFamily {
    Linear,
    ViaOrigin,
    Continuous,
    TwoPart,
    /// Via-origin rates plus a fixed fee; parameters are the rates then the
    /// fee.
    ViaOriginWithFee,
}

impl ScheduleFamily {
    pub const ALL: [ScheduleFamily; 5] = [
        ScheduleFamily::Linear,
        ScheduleFamily::ViaOrigin,
        ScheduleFamily::Continuous,
        ScheduleFamily::TwoPart,
        ScheduleFamily::ViaOriginWithFee,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleFamily::Linear => "linear",
            ScheduleFamily::ViaOrigin => "via_origin",
            ScheduleFamily::Continuous => "continuous",
            ScheduleFamily::TwoPart => "two_part",
            ScheduleFamily::ViaOriginWithFee => "via_origin_fee",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn dims(self, bins: &BinEdges) -> usize {
        match self {
            ScheduleFamily::Linear => 1,
            ScheduleFamily::TwoPart => 2,
            ScheduleFamily::ViaOrigin | ScheduleFamily::Continuous => bins.len(),
            ScheduleFamily::ViaOriginWithFee => bins.len() + 1,
        }
    }

    pub fn build(self, x: &[f64], bins: &BinEdges) -> Result<PriceSchedule> {
        match self {
            ScheduleFamily::Linear => PriceSchedule::linear(x[0]),
            ScheduleFamily::TwoPart => PriceSchedule::two_part(x[0], x[1]),
            ScheduleFamily::ViaOrigin => PriceSchedule::via_origin(bins, x.to_vec()),
            ScheduleFamily::Continuous => PriceSchedule::continuous(bins, x.to_vec()),
            ScheduleFamily::ViaOriginWithFee => {
                let n = bins.len();
                PriceSchedule::via_origin(bins, x[..n].to_vec())?.with_fee(x[n])
            }
        }
    }

    /// Parameters of `s` in this family, when `s` belongs to it (a linear
    /// price belongs to every family).
    pub fn params_of(self, s: &PriceSchedule, bins: &BinEdges) -> Option<Vec<f64>> {
        let n = bins.len();
        let flat = |r: f64| vec![r; n];
        match (self, s.kind) {
            (ScheduleFamily::Linear, ScheduleKind::Linear) if s.fixed_fee == 0.0 => Some(vec![s.rates[0]]),
            (ScheduleFamily::TwoPart, ScheduleKind::Linear | ScheduleKind::TwoPart) => {
                Some(vec![s.fixed_fee, s.rates[0]])
            }
            (ScheduleFamily::ViaOrigin | ScheduleFamily::Continuous, ScheduleKind::Linear) if s.fixed_fee == 0.0 => {
                Some(flat(s.rates[0]))
            }
            (ScheduleFamily::ViaOrigin, ScheduleKind::ViaOrigin)
            | (ScheduleFamily::Continuous, ScheduleKind::Continuous)
                if s.fixed_fee == 0.0 && &s.bins == bins =>
            {
                Some(s.rates.clone())
            }
            (ScheduleFamily::ViaOriginWithFee, ScheduleKind::Linear | ScheduleKind::TwoPart) => {
                let mut x = flat(s.rates[0]);
                x.push(s.fixed_fee);
                Some(x)
            }
            (ScheduleFamily::ViaOriginWithFee, ScheduleKind::ViaOrigin) if &s.bins == bins => {
                let mut x = s.rates.clone();
                x.push(s.fixed_fee);
                Some(x)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    GridBisection,
    NelderMead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub points_per_dim: usize,
    pub zoom: f64,
    pub stop_width: f64,
    pub rate_bounds: (f64, f64),
    pub fee_bounds: (f64, f64),
    pub optimizer: Optimizer,
    /// Start grid of the simplex method.
    pub nm_initial_grid: usize,
    /// Draws for smooth value functions, which have no exact integral.
    pub mc: McConfig,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            points_per_dim: 5,
            zoom: 0.5,
            stop_width: 1.0,
            rate_bounds: (0.0, 5000.0),
            fee_bounds: (0.0, 5000.0),
            optimizer: Optimizer::GridBisection,
            nm_initial_grid: 5,
            mc: McConfig::default(),
        }
    }
}

impl OptimizeConfig {
    fn bounds(&self, family: ScheduleFamily, bins: &BinEdges) -> (Vec<f64>, Vec<f64>) {
        let k = family.dims(bins);
        let mut lo = vec![self.rate_bounds.0; k];
        let mut hi = vec![self.rate_bounds.1; k];
        let fee_at = match family {
            ScheduleFamily::TwoPart => Some(0),
            ScheduleFamily::ViaOriginWithFee => Some(k - 1),
            _ => None,
        };
        if let Some(i) = fee_at {
            lo[i] = self.fee_bounds.0;
            hi[i] = self.fee_bounds.1;
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedSchedule {
    pub family: ScheduleFamily,
    pub schedule: PriceSchedule,
    pub report: ProfitReport,
    pub evaluations: usize,
    pub trace: GridTrace,
}

fn objective<'a>(
    ev: &'a ProfitEvaluator,
    family: ScheduleFamily,
    bins: &'a BinEdges,
    mc: McConfig,
) -> impl Fn(&[f64]) -> Result<f64> + Sync + 'a {
    move |x| {
        let s = family.build(x, bins)?;
        if ev.smoothness() == 1.0 {
            ev.profit(&s)
        } else {
            Ok(ev.report_mc(&s, &mc)?.expected_profit)
        }
    }
}

fn full_report(ev: &ProfitEvaluator, s: &PriceSchedule, mc: &McConfig) -> Result<ProfitReport> {
    if ev.smoothness() == 1.0 {
        ev.report(s)
    } else {
        ev.report_mc(s, mc)
    }
}

fn run(
    ev: &ProfitEvaluator,
    bins: &BinEdges,
    family: ScheduleFamily,
    config: &OptimizeConfig,
    seeds: &[PriceSchedule],
) -> Result<OptimizedSchedule> {
    let (lower, upper) = config.bounds(family, bins);
    let f = objective(ev, family, bins, config.mc);
    let opt = match config.optimizer {
        Optimizer::GridBisection => {
            let grid = GridBisectionConfig {
                points_per_dim: config.points_per_dim,
                zoom: config.zoom,
                stop_width: config.stop_width,
                ..GridBisectionConfig::new(lower.len())
            }
            .with_bounds(lower, upper);
            let starts: Vec<Vec<f64>> = seeds.iter().filter_map(|s| family.params_of(s, bins)).collect();
            grid_bisection_seeded(&f, &grid, &starts)?
        }
        Optimizer::NelderMead => {
            let nm = NelderMeadConfig {
                initial_grid: config.nm_initial_grid,
                tolerance: config.stop_width,
                ..NelderMeadConfig::new(lower.len())
            }
            .with_bounds(lower, upper);
            nelder_mead(&f, None, &nm)?
        }
    };
    let schedule = family.build(&opt.argmax, bins)?;
    Ok(OptimizedSchedule {
        family,
        report: full_report(ev, &schedule, &config.mc)?,
        schedule,
        evaluations: opt.evaluations,
        trace: opt.trace,
    })
}

/// Best schedule of a family. Multi-parameter families start from the
/// optimal linear price, so they never do worse than it.
pub fn optimize_schedule(market: &Market, family: ScheduleFamily, config: &OptimizeConfig) -> Result<OptimizedSchedule> {
    let ev = ProfitEvaluator::new(market)?;
    let bins = &market.bins.pricing_bins;
    if family == ScheduleFamily::Linear {
        return run(&ev, bins, family, config, &[]);
    }
    let linear = run(&ev, bins, ScheduleFamily::Linear, config, &[])?;
    run(&ev, bins, family, config, &[linear.schedule])
}

/// Best schedule of a family whose search incumbent starts at the best of
/// `seeds` (those expressible in the family).
pub fn optimize_schedule_seeded(
    market: &Market,
    family: ScheduleFamily,
    config: &OptimizeConfig,
    seeds: &[PriceSchedule],
) -> Result<OptimizedSchedule> {
    let ev = ProfitEvaluator::new(market)?;
    run(&ev, &market.bins.pricing_bins, family, config, seeds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedFeeAnalysis {
    pub linear: OptimizedSchedule,
    pub two_part: OptimizedSchedule,
    pub via_origin: OptimizedSchedule,
    pub via_origin_fee: OptimizedSchedule,
}

/// The four fee/no-fee families, each seeded with the ones it nests.
pub fn fixed_fee_analysis(market: &Market, config: &OptimizeConfig) -> Result<FixedFeeAnalysis> {
    let ev = ProfitEvaluator::new(market)?;
    let bins = &market.bins.pricing_bins;
    let linear = run(&ev, bins, ScheduleFamily::Linear, config, &[])?;
    let two_part = run(&ev, bins, ScheduleFamily::TwoPart, config, &[linear.schedule.clone()])?;
    let via_origin = run(&ev, bins, ScheduleFamily::ViaOrigin, config, &[linear.schedule.clone()])?;
    let via_origin_fee = run(
        &ev,
        bins,
        ScheduleFamily::ViaOriginWithFee,
        config,
        &[via_origin.schedule.clone(), two_part.schedule.clone()],
    )?;
    Ok(FixedFeeAnalysis {
        linear,
        two_part,
        via_origin,
        via_origin_fee,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualOptimum {
    /// Via-origin schedule assembled from the per-segment prices.
    pub schedule: PriceSchedule,
    /// Linear-price profit of each segment on its own; `None` when empty.
    pub segment_profits: Vec<Option<f64>>,
    /// Sum of the segment profits, as if no customer could switch segments.
    pub naive_profit: f64,
    /// Profit of the assembled schedule once customers choose freely.
    pub true_profit: f64,
    pub report: ProfitReport,
}

/// Prices each pricing segment with the linear price that is optimal for
/// its own customers, ignoring that customers may buy in other segments.
/// Empty segments borrow the previous segment's price (the next one's if
/// they lead).
pub fn individually_optimized(market: &Market, config: &OptimizeConfig) -> Result<IndividualOptimum> {
    let bins = &market.bins.pricing_bins;
    let optima = segment_linear_optima(market, config)?;
    let rates: Vec<Option<f64>> = optima.iter().map(|o| o.as_ref().map(|o| o.schedule.rates[0])).collect();
    let segment_profits: Vec<Option<f64>> = optima
        .iter()
        .map(|o| o.as_ref().map(|o| o.report.expected_profit))
        .collect();
    let Some(first) = rates.iter().flatten().next().copied() else {
        return domain("every pricing segment is empty");
    };
    let mut filled = Vec::with_capacity(rates.len());
    let mut prev = first;
    for r in &rates {
        prev = r.unwrap_or(prev);
        filled.push(prev);
    }
    let schedule = PriceSchedule::via_origin(bins, filled)?;
    let ev = ProfitEvaluator::new(market)?;
    let report = full_report(&ev, &schedule, &config.mc)?;
    Ok(IndividualOptimum {
        naive_profit: segment_profits.iter().flatten().sum(),
        true_profit: report.expected_profit,
        schedule,
        segment_profits,
        report,
    })
}

/// Optimal linear price of each pricing segment taken as its own market;
/// `None` for empty segments.
pub(crate) fn segment_linear_optima(market: &Market, config: &OptimizeConfig) -> Result<Vec<Option<OptimizedSchedule>>> {
    let bins = &market.bins.pricing_bins;
    (0..bins.len())
        .map(|k| {
            let idx = market.pricing_segment(k);
            if idx.is_empty() {
                return Ok(None);
            }
            let sub = market.subset(&idx);
            let ev = ProfitEvaluator::new(&sub)?;
            run(&ev, bins, ScheduleFamily::Linear, config, &[]).map(Some)
        })
        .collect()
}
