//! Price schedules and their structural checks.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::market::BinEdges;

/// Upper end of the integer grid used for structural scans and purchase
/// enumeration.
pub const DEFAULT_Q_MAX: u32 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `P(q) = p q (+ fee)`.
    Linear,
    /// Each segment's extension passes through the origin: `P(q) = p_k q`.
    ViaOrigin,
    /// Incremental per-segment rates; total price is continuous.
    Continuous,
    /// `P(q) = F + p q` for `q > 0`.
    TwoPart,
    /// Take-it-or-leave-it pricing per customer; evaluated by the
    /// counterfactual module, never through [`PriceSchedule::total_price`].
    Individualized,
}

/// A tariff. The fixed fee applies once for any positive purchase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub kind: ScheduleKind,
    pub bins: BinEdges,
    pub rates: Vec<f64>,
    pub fixed_fee: f64,
}

impl PriceSchedule {
    pub fn new(kind: ScheduleKind, bins: Vec<u32>, rates: Vec<f64>, fixed_fee: f64) -> Result<Self> {
        let s = Self {
            kind,
            bins: BinEdges::new(bins)?,
            rates,
            fixed_fee,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn linear(rate: f64) -> Result<Self> {
        Self::new(ScheduleKind::Linear, vec![0], vec![rate], 0.0)
    }

    pub fn two_part(fee: f64, rate: f64) -> Result<Self> {
        Self::new(ScheduleKind::TwoPart, vec![0], vec![rate], fee)
    }

    pub fn via_origin(bins: &BinEdges, rates: Vec<f64>) -> Result<Self> {
        Self::new(ScheduleKind::ViaOrigin, bins.starts().to_vec(), rates, 0.0)
    }

    pub fn continuous(bins: &BinEdges, rates: Vec<f64>) -> Result<Self> {
        Self::new(ScheduleKind::Continuous, bins.starts().to_vec(), rates, 0.0)
    }

    pub fn individualized() -> Self {
        Self {
            kind: ScheduleKind::Individualized,
            bins: BinEdges::new(vec![0]).expect("single bin"),
            rates: Vec::new(),
            fixed_fee: 0.0,
        }
    }

    pub fn with_fee(mut self, fee: f64) -> Result<Self> {
        self.fixed_fee = fee;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fixed_fee >= 0.0) || !self.fixed_fee.is_finite() {
            return domain(format!("fixed fee must be nonnegative, got {}", self.fixed_fee));
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return domain(format!("rates must be nonnegative, got {r}"));
        }
        if self.bins.starts()[0] > 1 {
            return domain("schedule bins must start at 0 or 1");
        }
        let expected = match self.kind {
            ScheduleKind::Linear | ScheduleKind::TwoPart => 1,
            ScheduleKind::ViaOrigin | ScheduleKind::Continuous => self.bins.len(),
            ScheduleKind::Individualized => 0,
        };
        if self.rates.len() != expected {
            return domain(format!(
                "{:?} schedule needs {expected} rates, got {}",
                self.kind,
                self.rates.len()
            ));
        }
        Ok(())
    }

    pub fn is_piecewise(&self) -> bool {
        matches!(self.kind, ScheduleKind::ViaOrigin | ScheduleKind::Continuous)
    }

    /// Half-open intervals over which the total price is affine in `q`.
    pub fn segments(&self) -> &BinEdges {
        &self.bins
    }

    fn segment_of(&self, q: f64) -> usize {
        match self.kind {
            ScheduleKind::ViaOrigin | ScheduleKind::Continuous => self.bins.index_of(q).unwrap_or(0),
            _ => 0,
        }
    }

    pub fn total_price(&self, q: f64) -> Result<f64> {
        if q < 0.0 || q.is_nan() {
            return domain(format!("quantity must be nonnegative, got {q}"));
        }
        if self.kind == ScheduleKind::Individualized {
            return Err(Error::Unsupported(
                "individualized schedules are priced per customer".into(),
            ));
        }
        Ok(self.total_price_unchecked(q))
    }

    #[inline]
    pub(crate) fn total_price_unchecked(&self, q: f64) -> f64 {
        if q == 0.0 {
            return 0.0;
        }
        match self.kind {
            ScheduleKind::Linear | ScheduleKind::TwoPart => self.fixed_fee + self.rates[0] * q,
            ScheduleKind::ViaOrigin => self.rates[self.segment_of(q)] * q + self.fixed_fee,
            ScheduleKind::Continuous => {
                let k = self.segment_of(q);
                let starts = self.bins.starts();
                let mut total = 0.0;
                for j in 0..k {
                    total += self.rates[j] * (starts[j + 1] - starts[j]) as f64;
                }
                let seg_start = if k == 0 { 0.0 } else { starts[k] as f64 };
                total + self.rates[k] * (q - seg_start) + self.fixed_fee
            }
            ScheduleKind::Individualized => f64::NAN,
        }
    }

    /// Per-unit rate applicable at `q`: the flat rate for via-origin
    /// schedules, the incremental rate for continuous ones.
    pub fn marginal_price(&self, q: f64) -> Result<f64> {
        if !(q > 0.0) {
            return domain(format!("marginal price needs q > 0, got {q}"));
        }
        if self.kind == ScheduleKind::Individualized {
            return Err(Error::Unsupported(
                "individualized schedules have no posted marginal price".into(),
            ));
        }
        Ok(self.rates[self.segment_of(q)])
    }

    /// Average price `P(q) / q` paid for `q` units.
    pub fn unit_price(&self, q: f64) -> Result<f64> {
        if !(q > 0.0) {
            return domain(format!("unit price needs q > 0, got {q}"));
        }
        Ok(self.total_price(q)? / q)
    }
}

/// Outcome of [`is_concave_increasing`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub concave_increasing: bool,
    /// Quantities `q` for which some `q' < q` costs strictly more.
    pub dips: Vec<u32>,
}

/// Scans the total price on `0..=q_max`.
pub fn is_concave_increasing(schedule: &PriceSchedule, q_max: u32) -> Result<ConcavityReport> {
    if schedule.kind == ScheduleKind::Individualized {
        return Err(Error::Unsupported("individualized schedules have no grid".into()));
    }
    let totals: Vec<f64> = (0..=q_max)
        .map(|q| schedule.total_price_unchecked(q as f64))
        .collect();
    let mut ok = true;
    let mut prev_inc = f64::INFINITY;
    for w in totals.windows(2) {
        let inc = w[1] - w[0];
        // totals accumulate rounding; equal increments may differ in the last bits
        if !(inc > 0.0) || inc > prev_inc + 1e-9 * prev_inc.abs().min(inc.abs()).max(1.0) {
            ok = false;
            break;
        }
        prev_inc = inc;
    }
    let mut dips = Vec::new();
    let mut running_max = totals[0];
    for (q, &t) in totals.iter().enumerate().skip(1) {
        if running_max > t {
            dips.push(q as u32);
        }
        running_max = running_max.max(t);
    }
    Ok(ConcavityReport {
        concave_increasing: ok && dips.is_empty(),
        dips,
    })
}
