//! Simplex ascent, started from the best point of a coarse grid.

use serde::{Deserialize, Serialize};

use super::grid::{GridTrace, Optimum};
use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Points per dimension of the start grid (typically 5 or 10).
    pub initial_grid: usize,
    /// Stop when every vertex is within this distance of the best one.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl NelderMeadConfig {
    pub fn new(dims: usize) -> Self {
        Self {
            lower: vec![0.0; dims],
            upper: vec![5000.0; dims],
            initial_grid: 5,
            tolerance: 1e-3,
            max_iterations: 5000,
        }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }
}

fn score(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximizes `objective` inside the box. Without `start`, begins at the
/// best point of an `initial_grid^K` grid.
pub fn nelder_mead<F>(objective: F, start: Option<Vec<f64>>, config: &NelderMeadConfig) -> Result<Optimum>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let k = config.lower.len();
    if k == 0 || config.upper.len() != k {
        return domain("bounds must be nonempty and of equal length");
    }
    if config.lower.iter().zip(&config.upper).any(|(l, u)| !(u > l)) {
        return domain("each upper bound must exceed its lower bound");
    }
    let clamp = |x: &mut Vec<f64>| {
        for (v, (l, u)) in x.iter_mut().zip(config.lower.iter().zip(&config.upper)) {
            *v = v.clamp(*l, *u);
        }
    };
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| -> Result<f64> {
        evaluations += 1;
        Ok(score(objective(x)?))
    };

    let (x0, f0) = match start {
        Some(mut s) => {
            if s.len() != k {
                return domain(format!("start has {} coordinates, expected {k}", s.len()));
            }
            clamp(&mut s);
            let f = eval(&s)?;
            (s, f)
        }
        None => {
            let d = config.initial_grid.max(2);
            let total = d.pow(k as u32);
            let mut best = (Vec::new(), f64::NEG_INFINITY);
            for idx in 0..total {
                let mut rest = idx;
                let mut x = vec![0.0; k];
                for j in (0..k).rev() {
                    let digit = rest % d;
                    rest /= d;
                    x[j] = config.lower[j] + (config.upper[j] - config.lower[j]) * digit as f64 / (d - 1) as f64;
                }
                let f = eval(&x)?;
                if best.0.is_empty() || f > best.1 {
                    best = (x, f);
                }
            }
            best
        }
    };

    // initial simplex: 5% of the box along each axis, pointing inward
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), f0)];
    for j in 0..k {
        let step = 0.05 * (config.upper[j] - config.lower[j]);
        let mut x = x0.clone();
        x[j] = if x[j] + step <= config.upper[j] { x[j] + step } else { x[j] - step };
        let f = eval(&x)?;
        simplex.push((x, f));
    }

    let by_value = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| b.1.total_cmp(&a.1);
    for _ in 0..config.max_iterations {
        simplex.sort_by(by_value);
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if diameter < config.tolerance {
            break;
        }
        let worst = simplex[k].clone();
        let centroid: Vec<f64> = (0..k)
            .map(|j| simplex[..k].iter().map(|(x, _)| x[j]).sum::<f64>() / k as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect();
            clamp(&mut x);
            x
        };

        let xr = along(1.0);
        let fr = eval(&xr)?;
        if fr > simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe)?;
            simplex[k] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > simplex[k - 1].1 {
            simplex[k] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr > worst.1 {
            let x = along(0.5);
            let f = eval(&x)?;
            (x, f)
        } else {
            let x = along(-0.5);
            let f = eval(&x)?;
            (x, f)
        };
        if fc > worst.1.max(if fr > worst.1 { fr } else { f64::NEG_INFINITY }) {
            simplex[k] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
            let f = eval(&x)?;
            *v = (x, f);
        }
    }
    simplex.sort_by(by_value);
    let (argmax, value) = simplex.swap_remove(0);
    Ok(Optimum {
        argmax,
        value,
        evaluations,
        trace: GridTrace::default(),
    })
}
