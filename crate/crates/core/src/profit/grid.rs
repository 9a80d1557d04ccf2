//! Zooming grid search on a box.
//!
//! Each round evaluates `d^K` equally spaced points (bounds included),
//! recenters a box `z` times as wide on the best one, and stops once every
//! width is at most `eps`. With width `l` this takes
//! `ceil((ln l - ln eps) / -ln z)` rounds.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBisectionConfig {
    pub points_per_dim: usize,
    pub zoom: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub stop_width: f64,
    /// Safety cap on rounds.
    pub max_iterations: usize,
}

impl GridBisectionConfig {
    /// `dims` coordinates on `[0, 5000]`, 5 points each, halving, to 1.
    pub fn new(dims: usize) -> Self {
        Self {
            points_per_dim: 5,
            zoom: 0.5,
            lower: vec![0.0; dims],
            upper: vec![5000.0; dims],
            stop_width: 1.0,
            max_iterations: 200,
        }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_dim < 2 {
            return domain("grid needs at least 2 points per dimension");
        }
        if !(self.zoom > 0.0 && self.zoom < 1.0) {
            return domain(format!("zoom must lie in (0, 1), got {}", self.zoom));
        }
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return domain("bounds must be nonempty and of equal length");
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite()) {
            return domain("each upper bound must exceed its lower bound");
        }
        if !(self.stop_width > 0.0) {
            return domain("stop width must be positive");
        }
        Ok(())
    }

    /// Rounds the search will run: `ceil((ln l - ln eps) / -ln z)` for the
    /// widest coordinate, at least 1.
    pub fn expected_iterations(&self) -> usize {
        let mut widths: Vec<f64> = self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect();
        let mut t = 0;
        loop {
            t += 1;
            widths.iter_mut().for_each(|w| *w *= self.zoom);
            if widths.iter().all(|&w| w <= self.stop_width) || t >= self.max_iterations {
                return t;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTraceRow {
    pub iteration: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Best point seen so far and its value.
    pub incumbent: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridTrace {
    pub rows: Vec<GridTraceRow>,
}

impl GridTrace {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    /// One line per round: iteration, lower and upper bound per coordinate,
    /// incumbent per coordinate, value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.rows.first().map_or(0, |r| r.lower.len());
        let mut header = vec!["iteration".to_string()];
        header.extend((0..k).map(|i| format!("lower_{i}")));
        header.extend((0..k).map(|i| format!("upper_{i}")));
        header.extend((0..k).map(|i| format!("incumbent_{i}")));
        header.push("value".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.iteration.to_string()];
            rec.extend(r.lower.iter().chain(&r.upper).chain(&r.incumbent).map(|x| format!("{x:.6}")));
            rec.push(format!("{:.6}", r.value));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub trace: GridTrace,
}

fn score(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

pub fn grid_bisection<F>(objective: F, config: &GridBisectionConfig) -> Result<Optimum>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    grid_bisection_seeded(objective, config, &[])
}

/// Grid search whose incumbent starts as the best of `seeds` (clamped into
/// the box). The returned point is never worse than any seed.
pub fn grid_bisection_seeded<F>(objective: F, config: &GridBisectionConfig, seeds: &[Vec<f64>]) -> Result<Optimum>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    config.validate()?;
    let k = config.dims();
    let d = config.points_per_dim;
    let mut evaluations = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let consider = |x: Vec<f64>, v: f64, best: &mut Option<(Vec<f64>, f64)>| {
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            *best = Some((x, v));
        }
    };

    for s in seeds {
        if s.len() != k {
            return domain(format!("seed has {} coordinates, expected {k}", s.len()));
        }
        let x: Vec<f64> = s
            .iter()
            .zip(config.lower.iter().zip(&config.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect();
        let v = score(objective(&x)?);
        evaluations += 1;
        consider(x, v, &mut best);
    }

    let mut lower = config.lower.clone();
    let mut width: Vec<f64> = config.lower.iter().zip(&config.upper).map(|(l, u)| u - l).collect();
    let total = d.checked_pow(k as u32).ok_or_else(|| crate::Error::Domain("grid too large".into()))?;
    let mut trace = GridTrace::default();

    for iteration in 1..=config.max_iterations {
        let point = |idx: usize| -> Vec<f64> {
            // first coordinate is the most significant digit
            let mut x = vec![0.0; k];
            let mut rest = idx;
            for j in (0..k).rev() {
                let digit = rest % d;
                rest /= d;
                x[j] = lower[j] + width[j] * digit as f64 / (d - 1) as f64;
            }
            x
        };
        let values: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|i| objective(&point(i)).map(score))
            .collect::<Result<Vec<f64>>>()?;
        evaluations += total;

        let mut arg = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[arg] {
                arg = i;
            }
        }
        let center = point(arg);
        consider(center.clone(), values[arg], &mut best);
        let (inc, val) = best.clone().expect("grid evaluated");
        trace.rows.push(GridTraceRow {
            iteration,
            lower: lower.clone(),
            upper: lower.iter().zip(&width).map(|(l, w)| l + w).collect(),
            incumbent: inc,
            value: val,
        });

        for j in 0..k {
            let old_lo = lower[j];
            let old_hi = old_lo + width[j];
            let w = width[j] * config.zoom;
            let lo = (center[j] - w / 2.0).max(old_lo).min(old_hi - w);
            lower[j] = lo;
            width[j] = w;
        }
        if width.iter().all(|&w| w <= config.stop_width) {
            break;
        }
    }

    let (argmax, value) = best.expect("grid evaluated");
    Ok(Optimum {
        argmax,
        value,
        evaluations,
        trace,
    })
}
