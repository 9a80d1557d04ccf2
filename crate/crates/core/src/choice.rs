//! Customer purchase decisions under a posted schedule.
//!
//! A customer with per-unit value `v` and size `q̄` picks the integer
//! quantity maximizing `V(q) - P(q)`. On every tariff segment the payoff is
//! affine in `q` below and above `q̄` (strictly concave below `q̄` for the
//! smooth value function), so the optimum is always one of a handful of
//! candidates: segment endpoints, the size itself, and for smooth values
//! the integers next to each segment's stationary point.
//!
//! Indifference is broken toward the larger quantity.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::market::gross_value_unchecked;
use crate::tariff::{PriceSchedule, ScheduleKind, DEFAULT_Q_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurchaseDecision {
    pub quantity: u32,
    pub payment: f64,
    /// `V(q*) - P(q*)`; zero when nothing is bought.
    pub surplus: f64,
    pub bought: bool,
}

impl PurchaseDecision {
    fn at(q: u32, payment: f64, surplus: f64) -> Self {
        Self {
            quantity: q,
            payment,
            surplus,
            bought: q > 0,
        }
    }
}

#[inline]
fn payoff(schedule: &PriceSchedule, alpha: f64, v: f64, size: u32, q: u32) -> (f64, f64) {
    if q == 0 {
        return (0.0, 0.0);
    }
    let qf = q as f64;
    let price = schedule.total_price_unchecked(qf);
    (gross_value_unchecked(alpha, v, size, qf) - price, price)
}

/// Largest quantity any enumeration considers: `max(q_max, size)`.
#[inline]
fn cap(size: u32, q_max: u32) -> u32 {
    q_max.max(size)
}

/// Integer ranges `[lo, hi]` over which the total price is affine, with the
/// segment's incremental rate.
fn integer_segments(schedule: &PriceSchedule, cap: u32) -> Vec<(u32, u32, f64)> {
    match schedule.kind {
        ScheduleKind::ViaOrigin | ScheduleKind::Continuous => {
            let starts = schedule.bins.starts();
            (0..starts.len())
                .filter_map(|k| {
                    let lo = starts[k].max(1);
                    let hi = schedule.bins.end(k).map_or(cap, |e| (e - 1).min(cap));
                    (lo <= hi).then_some((lo, hi, schedule.rates[k]))
                })
                .collect()
        }
        _ => vec![(1, cap, schedule.rates.first().copied().unwrap_or(0.0))],
    }
}

fn check(schedule: &PriceSchedule, size: u32) -> Result<()> {
    if size == 0 {
        return domain("size must be at least 1");
    }
    if schedule.kind == ScheduleKind::Individualized {
        return Err(Error::Unsupported(
            "individualized schedules have no posted menu".into(),
        ));
    }
    Ok(())
}

fn candidates(schedule: &PriceSchedule, size: u32, alpha: f64, v: f64, q_max: u32) -> Vec<u32> {
    let cap = cap(size, q_max);
    let mut out = vec![0, size];
    for (lo, hi, rate) in integer_segments(schedule, cap) {
        out.push(lo);
        out.push(hi);
        if alpha < 1.0 && v > 0.0 && rate > 0.0 && lo <= size {
            let top = hi.min(size);
            let zeta = (size as f64).powf(1.0 - alpha);
            let stationary = (v * zeta * alpha / rate).powf(1.0 / (1.0 - alpha));
            for q in [stationary.floor(), stationary.ceil()] {
                let q = q.clamp(lo as f64, top as f64) as u32;
                out.push(q);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Quantities that can be optimal for a customer of this size under the
/// piecewise-linear value function, for any value `v`.
pub fn candidate_quantities(size: u32, schedule: &PriceSchedule) -> Result<Vec<u32>> {
    check(schedule, size)?;
    Ok(candidates(schedule, size, 1.0, 0.0, DEFAULT_Q_MAX))
}

/// Optimal integer purchase.
pub fn solve_purchase(v: f64, size: u32, schedule: &PriceSchedule, alpha: f64) -> Result<PurchaseDecision> {
    check(schedule, size)?;
    Ok(solve_purchase_unchecked(v, size, schedule, alpha, DEFAULT_Q_MAX))
}

pub(crate) fn solve_purchase_unchecked(
    v: f64,
    size: u32,
    schedule: &PriceSchedule,
    alpha: f64,
    q_max: u32,
) -> PurchaseDecision {
    let mut best = PurchaseDecision::at(0, 0.0, 0.0);
    for q in candidates(schedule, size, alpha, v, q_max) {
        let (u, price) = payoff(schedule, alpha, v, size, q);
        if u >= best.surplus {
            best = PurchaseDecision::at(q, price, u);
        }
    }
    best
}

/// Candidate payoffs of one customer size under one schedule, for the
/// piecewise-linear value function; answers many `v` without re-enumerating.
pub(crate) struct PurchaseTable {
    size: u32,
    /// `(q, min(q, size), P(q))`, ascending in `q`.
    rows: Vec<(u32, f64, f64)>,
}

impl PurchaseTable {
    pub(crate) fn new(size: u32, schedule: &PriceSchedule, q_max: u32) -> Self {
        let rows = candidates(schedule, size, 1.0, 0.0, q_max)
            .into_iter()
            .filter(|&q| q > 0)
            .map(|q| (q, q.min(size) as f64, schedule.total_price_unchecked(q as f64)))
            .collect();
        Self { size, rows }
    }

    pub(crate) fn decide(&self, v: f64) -> PurchaseDecision {
        let mut best = PurchaseDecision::at(0, 0.0, 0.0);
        for &(q, units, price) in &self.rows {
            let u = gross_value_unchecked(1.0, v, self.size, units) - price;
            if u >= best.surplus {
                best = PurchaseDecision::at(q, price, u);
            }
        }
        best
    }
}

/// Exhaustive search over `0..=max(q_max, size)`; the oracle for
/// [`solve_purchase`].
pub fn brute_force_purchase(
    v: f64,
    size: u32,
    schedule: &PriceSchedule,
    alpha: f64,
    q_max: u32,
) -> Result<PurchaseDecision> {
    check(schedule, size)?;
    let mut best = PurchaseDecision::at(0, 0.0, 0.0);
    for q in 1..=cap(size, q_max) {
        let (u, price) = payoff(schedule, alpha, v, size, q);
        if u >= best.surplus {
            best = PurchaseDecision::at(q, price, u);
        }
    }
    Ok(best)
}

/// Partition of the value axis by the optimal quantity. Interval `j` is
/// `[breakpoints[j-1], breakpoints[j])`, unbounded at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEnvelope {
    pub size: u32,
    pub breakpoints: Vec<f64>,
    pub winning_quantity: Vec<u32>,
    pub payment: Vec<f64>,
}

impl ValueEnvelope {
    pub fn interval_of(&self, v: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= v)
    }

    pub fn quantity_at(&self, v: f64) -> u32 {
        self.winning_quantity[self.interval_of(v)]
    }

    /// `(lo, hi)` bounds of interval `j`.
    pub fn bounds(&self, j: usize) -> (f64, f64) {
        let lo = if j == 0 { f64::NEG_INFINITY } else { self.breakpoints[j - 1] };
        let hi = self.breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    pub fn len(&self) -> usize {
        self.winning_quantity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.winning_quantity.is_empty()
    }
}

/// Upper envelope of the payoff lines `U_q(v) = v min(q, q̄) - P(q)`.
pub fn value_envelope(size: u32, schedule: &PriceSchedule, alpha: f64) -> Result<ValueEnvelope> {
    if alpha != 1.0 {
        return Err(Error::Unsupported(
            "value envelopes need the piecewise-linear value function".into(),
        ));
    }
    check(schedule, size)?;
    Ok(value_envelope_unchecked(size, schedule, DEFAULT_Q_MAX))
}

pub(crate) fn value_envelope_unchecked(size: u32, schedule: &PriceSchedule, q_max: u32) -> ValueEnvelope {
    // (slope, intercept, q, payment); one line per slope, best intercept,
    // larger q on ties
    let mut lines: Vec<(f64, f64, u32, f64)> = Vec::new();
    for q in candidates(schedule, size, 1.0, 0.0, q_max) {
        let price = if q == 0 { 0.0 } else { schedule.total_price_unchecked(q as f64) };
        let slope = q.min(size) as f64;
        match lines.last_mut() {
            Some(last) if last.0 == slope => {
                if -price >= last.1 {
                    *last = (slope, -price, q, price);
                }
            }
            _ => lines.push((slope, -price, q, price)),
        }
    }

    let cross = |a: &(f64, f64, u32, f64), b: &(f64, f64, u32, f64)| (a.1 - b.1) / (b.0 - a.0);
    let mut hull: Vec<(f64, f64, u32, f64)> = Vec::with_capacity(lines.len());
    for line in lines {
        while hull.len() >= 2 {
            let n = hull.len();
            if cross(&hull[n - 2], &line) <= cross(&hull[n - 2], &hull[n - 1]) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(line);
    }

    ValueEnvelope {
        size,
        breakpoints: hull.windows(2).map(|w| cross(&w[0], &w[1])).collect(),
        winning_quantity: hull.iter().map(|l| l.2).collect(),
        payment: hull.iter().map(|l| l.3).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::SizeBinConfig;
    use crate::tariff::is_concave_increasing;
    use proptest::prelude::*;

    const TABLE4: [f64; 5] = [2744.0, 2572.0, 2188.0, 2117.0, 1959.0];

    fn via(rates: Vec<f64>) -> PriceSchedule {
        PriceSchedule::via_origin(&SizeBinConfig::default().pricing_bins, rates).unwrap()
    }

    fn two_bin() -> PriceSchedule {
        PriceSchedule::new(ScheduleKind::ViaOrigin, vec![0, 101], vec![2000.0, 2500.0], 0.0).unwrap()
    }

    #[test]
    fn candidate_examples() {
        let p = via(TABLE4.to_vec());
        let c8 = candidate_quantities(8, &p).unwrap();
        for q in [0, 8, 10, 20, 50, 100] {
            assert!(c8.contains(&q), "{q} missing from {c8:?}");
        }
        let c15 = candidate_quantities(15, &p).unwrap();
        for q in [0, 10, 15, 20, 50, 100] {
            assert!(c15.contains(&q));
        }
        let c120 = candidate_quantities(120, &two_bin()).unwrap();
        for q in [0, 100, 120] {
            assert!(c120.contains(&q));
        }
    }

    #[test]
    fn large_customer_stops_at_the_cheaper_tier() {
        // 2000/unit up to 100 units, 2500/unit above
        let d = solve_purchase(2200.0, 120, &two_bin(), 1.0).unwrap();
        assert_eq!(d.quantity, 100);
        assert_eq!(d.surplus, 20000.0);
        assert_eq!(d, brute_force_purchase(2200.0, 120, &two_bin(), 1.0, DEFAULT_Q_MAX).unwrap());
    }

    #[test]
    fn no_purchase_cases() {
        let lin = PriceSchedule::linear(1000.0).unwrap();
        let d = solve_purchase(900.0, 10, &lin, 1.0).unwrap();
        assert_eq!((d.quantity, d.surplus, d.bought), (0, 0.0, false));
        // 8 units at 2744 loses 1152; 10 units at 2572 costs 25720 for 20800 of value
        let d = solve_purchase(2600.0, 8, &via(TABLE4.to_vec()), 1.0).unwrap();
        assert_eq!(d.quantity, 0);
        let b = brute_force_purchase(2600.0, 8, &via(TABLE4.to_vec()), 1.0, DEFAULT_Q_MAX).unwrap();
        assert_eq!(b.quantity, 0);
        assert_eq!(solve_purchase(0.0, 30, &via(TABLE4.to_vec()), 1.0).unwrap().quantity, 0);
    }

    #[test]
    fn ties_prefer_larger_quantity() {
        let lin = PriceSchedule::linear(1000.0).unwrap();
        let d = solve_purchase(1000.0, 10, &lin, 1.0).unwrap();
        assert_eq!(d.quantity, 10);
        assert_eq!(d.surplus, 0.0);
    }

    #[test]
    fn envelope_linear() {
        let e = value_envelope(12, &PriceSchedule::linear(700.0).unwrap(), 1.0).unwrap();
        assert_eq!(e.winning_quantity, vec![0, 12]);
        assert_eq!(e.breakpoints, vec![700.0]);
        let same = value_envelope(12, &via(vec![700.0; 5]), 1.0).unwrap();
        assert_eq!(same.winning_quantity, e.winning_quantity);
        assert_eq!(same.breakpoints, e.breakpoints);
        assert!(value_envelope(12, &PriceSchedule::linear(700.0).unwrap(), 0.9).is_err());
    }

    #[test]
    fn envelope_two_tier() {
        let e = value_envelope(120, &two_bin(), 1.0).unwrap();
        assert_eq!(e.winning_quantity, vec![0, 100, 120]);
        // 0 vs 100: 100 v = 200000; 100 vs 120: 20 v = 300000 - 200000
        assert_eq!(e.breakpoints, vec![2000.0, 5000.0]);
        // scan oracle
        let mut v = 1500.0;
        while v < 6000.0 {
            let d = solve_purchase(v, 120, &two_bin(), 1.0).unwrap();
            assert_eq!(e.quantity_at(v), d.quantity, "v = {v}");
            v += 0.37;
        }
    }

    fn arb_schedule() -> impl Strategy<Value = PriceSchedule> {
        let bins = SizeBinConfig::default().pricing_bins;
        let rates = prop::collection::vec(500.0..4000.0f64, 5);
        (0..4u8, rates, 0.0..3000.0f64, any::<bool>()).prop_map(move |(kind, rates, fee, with_fee)| {
            let fee = if with_fee { fee } else { 0.0 };
            match kind {
                0 => PriceSchedule::linear(rates[0]).unwrap().with_fee(fee).unwrap(),
                1 => PriceSchedule::two_part(fee, rates[0]).unwrap(),
                2 => PriceSchedule::via_origin(&bins, rates).unwrap().with_fee(fee).unwrap(),
                _ => PriceSchedule::continuous(&bins, rates).unwrap().with_fee(fee).unwrap(),
            }
        })
    }

    proptest! {
        #[test]
        fn enumeration_matches_brute_force(
            p in arb_schedule(),
            v in -500.0..6000.0f64,
            size in prop::sample::select(vec![1u32, 2, 9, 10, 11, 19, 20, 21, 49, 50, 99, 100, 101, 250, 600]),
            alpha in prop::sample::select(vec![1.0, 0.9, 0.75]),
        ) {
            let fast = solve_purchase(v, size, &p, alpha).unwrap();
            let slow = brute_force_purchase(v, size, &p, alpha, DEFAULT_Q_MAX).unwrap();
            prop_assert_eq!(fast.quantity, slow.quantity);
            prop_assert_eq!(fast.payment, slow.payment);
            prop_assert!(fast.surplus >= 0.0);
            if fast.bought {
                prop_assert!(fast.payment <= gross_value_unchecked(alpha, v, size, fast.quantity as f64));
            }
        }

        #[test]
        fn quantity_monotone_in_value(p in arb_schedule(), v1 in 0.0..6000.0f64, dv in 0.0..3000.0f64, size in 1u32..300) {
            let lo = solve_purchase(v1, size, &p, 1.0).unwrap().quantity;
            let hi = solve_purchase(v1 + dv, size, &p, 1.0).unwrap().quantity;
            prop_assert!(lo <= hi);
        }

        #[test]
        fn envelope_agrees_with_solver(p in arb_schedule(), size in 1u32..300, vs in prop::collection::vec(-1000.0..8000.0f64, 50)) {
            let e = value_envelope(size, &p, 1.0).unwrap();
            prop_assert_eq!(e.winning_quantity[0], 0);
            prop_assert!(e.winning_quantity.windows(2).all(|w| w[0] <= w[1]));
            for v in vs {
                prop_assert_eq!(e.quantity_at(v), solve_purchase(v, size, &p, 1.0).unwrap().quantity);
            }
        }

        #[test]
        fn concave_schedules_sell_all_or_nothing(
            rates in prop::collection::vec(100.0..4000.0f64, 5),
            fee in 0.0..2000.0f64,
            v in 0.0..6000.0f64,
            size in 1u32..400,
        ) {
            let mut rates = rates;
            rates.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let p = PriceSchedule::continuous(&SizeBinConfig::default().pricing_bins, rates).unwrap().with_fee(fee).unwrap();
            prop_assume!(is_concave_increasing(&p, DEFAULT_Q_MAX).unwrap().concave_increasing);
            let q = solve_purchase(v, size, &p, 1.0).unwrap().quantity;
            prop_assert!(q == 0 || q == size);
        }
    }
}
