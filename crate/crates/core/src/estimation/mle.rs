//! Maximum likelihood for the binary won/lost outcome.
//!
//! Damped Newton on the mean negative log-likelihood with analytic
//! derivatives. The scale is optimized as `sigma = floor + exp(eta)` and
//! reported as `sigma`; convergence is judged on the gradient with respect
//! to the reported parameters.

use std::collections::BTreeMap;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{empirical_size_distribution, success_probability, EstimationConfig};
use crate::error::{domain, Error, Result};
use crate::market::{BinEdges, CustomerRecord, ErrorFamily, ValueModel, INTERCEPT};

const LOG_FLOOR: f64 = -690.7755278982137; // ln 1e-300
const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub value_model: ValueModel,
    /// Total over all (augmented) records.
    pub neg_log_likelihood: f64,
    /// Filled by the bootstrap; empty after a plain fit.
    pub standard_errors: BTreeMap<String, f64>,
    pub converged: bool,
    /// The scale sits on its floor or the data are perfectly separated.
    pub boundary: bool,
    pub iterations: usize,
    /// Largest absolute gradient entry of the mean negative log-likelihood.
    pub gradient_max_norm: f64,
    pub n_obs: usize,
    pub size_pmf: BTreeMap<u32, f64>,
    pub warnings: Vec<String>,
}

/// Flat `(name, value)` view of a model: coefficients, year effects, size
/// effects, then `sigma`.
pub fn parameter_vector(m: &ValueModel) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = m.beta.clone();
    out.extend(m.year_effects.iter().map(|(y, a)| (format!("year:{y}"), *a)));
    out.extend(
        m.size_effects
            .iter()
            .enumerate()
            .map(|(k, g)| (format!("size:{}", m.size_bins.label(k)), *g)),
    );
    out.push(("sigma".into(), m.sigma));
    out
}

/// Log-likelihood of the records under `m`, evaluated record by record.
pub fn log_likelihood(records: &[CustomerRecord], m: &ValueModel) -> Result<f64> {
    let mut total = 0.0;
    for r in records {
        let p = success_probability(m, r)?;
        let hit = if r.success { p } else { 1.0 - p };
        total += hit.max(1e-300).ln();
    }
    Ok(total)
}

struct Layout {
    covariates: Vec<String>,
    years: Vec<i32>,
    bins: BinEdges,
    /// Estimation bins with a free effect (bin 0 is the base).
    free_bins: Vec<usize>,
}

impl Layout {
    fn dim(&self) -> usize {
        self.covariates.len() + self.years.len() - 1 + self.free_bins.len()
    }

    fn to_model(&self, theta: &[f64], sigma: f64, family: ErrorFamily) -> ValueModel {
        let nc = self.covariates.len();
        let ny = self.years.len() - 1;
        let beta = self.covariates.iter().cloned().zip(theta[..nc].iter().copied()).collect();
        let mut year_effects = BTreeMap::from([(self.years[0], 0.0)]);
        for (y, a) in self.years[1..].iter().zip(&theta[nc..nc + ny]) {
            year_effects.insert(*y, *a);
        }
        let mut size_effects = vec![0.0; self.bins.len()];
        for (k, g) in self.free_bins.iter().zip(&theta[nc + ny..]) {
            size_effects[*k] = *g;
        }
        ValueModel {
            beta,
            year_effects,
            size_effects,
            size_bins: self.bins.clone(),
            sigma,
            error_family: family,
            smoothness: 1.0,
        }
    }
}

struct Data {
    k: usize,
    x: Vec<f64>,
    price: Vec<f64>,
    success: Vec<bool>,
    family: ErrorFamily,
    floor: f64,
}

struct Eval {
    f: f64,
    /// In `(theta, eta)` coordinates.
    grad: Vec<f64>,
    hess: Vec<f64>,
    /// With respect to `(theta, sigma)`.
    grad_reported: Vec<f64>,
    clamped: usize,
}

impl Data {
    fn n(&self) -> usize {
        self.price.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    /// `(z, sign)` with `ln L_i = ln F(z)`.
    #[inline]
    fn z(&self, i: usize, theta: &[f64], sigma: f64) -> (f64, f64) {
        let mu: f64 = self.row(i).iter().zip(theta).map(|(x, b)| x * b).sum();
        let u = (self.price[i] - mu) / sigma;
        if self.success[i] {
            (-u, -1.0)
        } else {
            (u, 1.0)
        }
    }

    fn sigma(&self, eta: f64) -> f64 {
        self.floor + eta.exp()
    }

    fn value(&self, phi: &[f64]) -> f64 {
        let (theta, eta) = phi.split_at(self.k);
        let sigma = self.sigma(eta[0]);
        let n = self.n();
        let parts: Vec<f64> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                (c * CHUNK..((c + 1) * CHUNK).min(n))
                    .map(|i| self.family.log_cdf(self.z(i, theta, sigma).0).max(LOG_FLOOR))
                    .sum::<f64>()
            })
            .collect();
        -parts.iter().sum::<f64>() / n as f64
    }

    fn evaluate(&self, phi: &[f64]) -> Eval {
        let k = self.k;
        let m = k + 1;
        let (theta, eta) = phi.split_at(k);
        let w = eta[0].exp();
        let sigma = self.floor + w;
        let n = self.n();

        // per chunk: [loglik, grad (m), hess (m*m), clamped]
        let parts: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; 2 + m + m * m];
                let mut gl = vec![0.0; m];
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let (z, sign) = self.z(i, theta, sigma);
                    let l = self.family.log_cdf(z);
                    if l < LOG_FLOOR {
                        acc[1 + m + m * m] += 1.0;
                    }
                    acc[0] += l.max(LOG_FLOOR);
                    let (d1, d2) = self.family.log_cdf_derivatives(z);
                    let x = self.row(i);
                    for j in 0..k {
                        gl[j] = -sign * d1 * x[j] / sigma;
                    }
                    gl[k] = -d1 * z / sigma;
                    for j in 0..m {
                        acc[1 + j] += gl[j];
                    }
                    let s2 = sigma * sigma;
                    let h = &mut acc[1 + m..1 + m + m * m];
                    for a in 0..k {
                        let xa = x[a] * d2 / s2;
                        for b in 0..=a {
                            h[a * m + b] += xa * x[b];
                        }
                        h[k * m + a] += sign * x[a] * (d2 * z + d1) / s2;
                    }
                    h[k * m + k] += (d2 * z * z + 2.0 * d1 * z) / s2;
                }
                acc
            })
            .collect();

        let mut total = vec![0.0; 2 + m + m * m];
        for p in &parts {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        let nf = n as f64;
        let mut hess_sigma = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..=a {
                let v = -total[1 + m + a * m + b] / nf;
                hess_sigma[a * m + b] = v;
                hess_sigma[b * m + a] = v;
            }
        }
        let grad_reported: Vec<f64> = (0..m).map(|j| -total[1 + j] / nf).collect();

        // chain rule to eta
        let mut grad = grad_reported.clone();
        grad[k] *= w;
        let mut hess = hess_sigma;
        for a in 0..k {
            hess[a * m + k] *= w;
            hess[k * m + a] *= w;
        }
        hess[k * m + k] = hess[k * m + k] * w * w + grad_reported[k] * w;

        Eval {
            f: -total[0] / nf,
            grad,
            hess,
            grad_reported,
            clamped: total[1 + m + m * m] as usize,
        }
    }
}

/// Solves `(H + lambda D) d = rhs` by Cholesky, `D` the clipped diagonal.
fn damped_solve(h: &[f64], m: usize, lambda: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let max_diag = (0..m).map(|i| h[i * m + i].abs()).fold(0.0, f64::max).max(1e-300);
    let mut a = h.to_vec();
    for i in 0..m {
        a[i * m + i] += lambda * h[i * m + i].abs().max(1e-12 * max_diag);
    }
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i * m + j];
            for p in 0..j {
                s -= l[i * m + p] * l[j * m + p];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * m + i] = s.sqrt();
            } else {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    let mut y = vec![0.0; m];
    for i in 0..m {
        let s: f64 = (0..i).map(|p| l[i * m + p] * y[p]).sum();
        y[i] = (rhs[i] - s) / l[i * m + i];
    }
    let mut d = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|p| l[p * m + i] * d[p]).sum();
        d[i] = (y[i] - s) / l[i * m + i];
    }
    d.iter().all(|v| v.is_finite()).then_some(d)
}

struct Run {
    phi: Vec<f64>,
    f: f64,
    converged: bool,
    iterations: usize,
    gmax: f64,
    clamped: usize,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn newton(data: &Data, start: Vec<f64>, tol: f64, max_iter: usize) -> Run {
    let m = data.k + 1;
    let mut phi = start;
    let mut ev = data.evaluate(&phi);
    let mut iterations = 0;
    while iterations < max_iter {
        if max_abs(&ev.grad_reported) <= tol {
            break;
        }
        iterations += 1;
        let rhs: Vec<f64> = ev.grad.iter().map(|g| -g).collect();
        let slack = 8.0 * f64::EPSILON * ev.f.abs().max(1e-300);
        let mut lambda = 0.0;
        let mut next = None;
        for _ in 0..40 {
            let Some(d) = damped_solve(&ev.hess, m, lambda, &rhs) else {
                lambda = (lambda * 10.0).max(1e-8);
                continue;
            };
            let slope: f64 = d.iter().zip(&ev.grad).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                lambda = (lambda * 10.0).max(1e-8);
                continue;
            }
            let mut t = 1.0;
            for _ in 0..30 {
                let trial: Vec<f64> = phi.iter().zip(&d).map(|(p, s)| p + t * s).collect();
                let f = data.value(&trial);
                if f <= ev.f + 1e-4 * t * slope || (f.is_finite() && f <= ev.f + slack) {
                    next = Some(trial);
                    break;
                }
                t *= 0.5;
            }
            if next.is_some() {
                break;
            }
            lambda = (lambda * 10.0).max(1e-8);
        }
        match next {
            Some(p) => {
                phi = p;
                ev = data.evaluate(&phi);
            }
            None => break,
        }
    }
    let gmax = max_abs(&ev.grad_reported);
    Run {
        phi,
        f: ev.f,
        converged: gmax <= tol,
        iterations,
        gmax,
        clamped: ev.clamped,
    }
}

fn build(records: &[CustomerRecord], config: &EstimationConfig) -> Result<(Layout, Data, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut covariates = vec![INTERCEPT.to_string()];
    covariates.extend(config.covariate_names.iter().filter(|c| *c != INTERCEPT).cloned());
    let mut years: Vec<i32> = records.iter().map(|r| r.year).collect();
    years.sort_unstable();
    years.dedup();

    let bins = config.bins.estimation_bins.clone();
    let mut bin_of = Vec::with_capacity(records.len());
    let mut seen = vec![false; bins.len()];
    for r in records {
        let b = bins
            .index_of_size(r.size)
            .ok_or_else(|| Error::Config(format!("record `{}`: size {} maps to no estimation bin", r.id, r.size)))?;
        seen[b] = true;
        bin_of.push(b);
    }
    let free_bins: Vec<usize> = (1..bins.len())
        .filter(|&b| {
            if !seen[b] {
                warnings.push(format!("estimation bin {} has no records; its effect is held at 0", bins.label(b)));
            }
            seen[b]
        })
        .collect();
    let layout = Layout {
        covariates,
        years,
        bins,
        free_bins,
    };

    let k = layout.dim();
    let mut x = Vec::with_capacity(records.len() * k);
    for (r, &b) in records.iter().zip(&bin_of) {
        for name in &layout.covariates {
            let v = if name == INTERCEPT {
                1.0
            } else {
                *r.covariates
                    .get(name)
                    .ok_or_else(|| Error::Config(format!("record `{}` is missing covariate `{name}`", r.id)))?
            };
            x.push(v);
        }
        x.extend(layout.years[1..].iter().map(|&y| if r.year == y { 1.0 } else { 0.0 }));
        x.extend(layout.free_bins.iter().map(|&j| if b == j { 1.0 } else { 0.0 }));
    }
    let data = Data {
        k,
        x,
        price: records.iter().map(|r| r.observed_unit_price).collect(),
        success: records.iter().map(|r| r.success).collect(),
        family: config.error_family,
        floor: config.sigma_floor,
    };
    Ok((layout, data, warnings))
}

/// Fits the value model to augmented records (see
/// [`augment_zero_price`](super::augment_zero_price)).
pub fn fit_mle(records: &[CustomerRecord], config: &EstimationConfig) -> Result<FitResult> {
    config.validate()?;
    if records.is_empty() {
        return domain("no records to fit");
    }
    for r in records {
        r.validate()?;
    }
    let (layout, data, mut warnings) = build(records, config)?;
    let k = data.k;

    let quoted: Vec<f64> = data.price.iter().copied().filter(|p| *p > 0.0).collect();
    let (mean, sd) = if quoted.is_empty() {
        (0.0, 1.0)
    } else {
        let mean = quoted.iter().sum::<f64>() / quoted.len() as f64;
        let var = quoted.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (quoted.len().max(2) - 1) as f64;
        (mean, if var > 0.0 { var.sqrt() } else { mean.abs().max(1.0) })
    };
    let eta_of = |s: f64| (s - config.sigma_floor).max(config.sigma_floor).ln();
    let mut starts = Vec::with_capacity(config.restarts + 1);
    let mut phi0 = vec![0.0; k + 1];
    phi0[0] = mean;
    phi0[k] = eta_of(sd);
    starts.push(phi0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.restarts {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        let mut phi = vec![0.0; k + 1];
        phi[0] = mean + sd * a;
        phi[k] = eta_of(sd * (0.5 * b).exp());
        starts.push(phi);
    }

    let mut best: Option<Run> = None;
    for s in starts {
        let run = newton(&data, s, config.optimizer_tolerance, config.max_iterations);
        if best.as_ref().is_none_or(|b| run.f < b.f || (run.f.is_finite() && !b.f.is_finite())) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");

    let sigma = data.sigma(best.phi[k]);
    let model = layout.to_model(&best.phi[..k], sigma, config.error_family);
    let n = data.n();

    let mut boundary = false;
    if sigma - config.sigma_floor <= 1e-9 * config.sigma_floor.max(1.0) {
        boundary = true;
        warnings.push("scale estimate sits on its lower bound".into());
    }
    let worst_fit = (0..n)
        .map(|i| data.family.log_cdf(data.z(i, &best.phi[..k], sigma).0))
        .fold(0.0, f64::min);
    if worst_fit > -1e-9 {
        boundary = true;
        warnings.push("every outcome is predicted with certainty; the data are separated".into());
    }
    if best.clamped > 0 {
        warnings.push(format!(
            "{} records have likelihood below 1e-300 and were clamped",
            best.clamped
        ));
    }
    if !best.converged {
        warnings.push(format!(
            "stopped after {} iterations with gradient {:.3e}",
            best.iterations, best.gmax
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }

    Ok(FitResult {
        value_model: model,
        neg_log_likelihood: best.f * n as f64,
        standard_errors: BTreeMap::new(),
        converged: best.converged,
        boundary,
        iterations: best.iterations,
        gradient_max_norm: best.gmax,
        n_obs: n,
        size_pmf: empirical_size_distribution(records)?,
        warnings,
    })
}
