use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::bins::BinEdges;
use super::CustomerRecord;
use crate::error::{domain, Error, Result};

/// Name of the constant covariate carried inside `beta`.
pub const INTERCEPT: &str = "intercept";

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Distribution of the standardized value shock `(v - mu) / sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorFamily {
    /// Standard logistic, variance `pi^2 / 3`.
    Logistic,
    /// Standard normal.
    Normal,
}

impl ErrorFamily {
    pub fn pdf(self, z: f64) -> f64 {
        match self {
            ErrorFamily::Logistic => {
                let e = (-z.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            ErrorFamily::Normal => (-0.5 * z * z - LN_SQRT_2PI).exp(),
        }
    }

    pub fn cdf(self, z: f64) -> f64 {
        match self {
            ErrorFamily::Logistic => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            ErrorFamily::Normal => 0.5 * erfc(-z / std::f64::consts::SQRT_2),
        }
    }

    /// `ln F(z)`, accurate deep in the lower tail.
    pub fn log_cdf(self, z: f64) -> f64 {
        match self {
            ErrorFamily::Logistic => -softplus(-z),
            ErrorFamily::Normal => {
                if z > -30.0 {
                    self.cdf(z).ln()
                } else {
                    let z2 = z * z;
                    -0.5 * z2 - LN_SQRT_2PI - (-z).ln()
                        + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
                }
            }
        }
    }

    /// First and second derivative of `ln F(z)`.
    pub fn log_cdf_derivatives(self, z: f64) -> (f64, f64) {
        match self {
            ErrorFamily::Logistic => {
                let f_neg = self.cdf(-z);
                (f_neg, -self.cdf(z) * f_neg)
            }
            ErrorFamily::Normal => {
                let mills = if z > -30.0 {
                    self.pdf(z) / self.cdf(z)
                } else {
                    let z2 = z * z;
                    -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2))
                };
                (mills, -mills * (z + mills))
            }
        }
    }

    /// `H(z) = ∫_{-inf}^{z} t f(t) dt`, the lower partial first moment.
    /// `H(±inf) = 0` for both families.
    pub fn partial_moment(self, z: f64) -> f64 {
        if z.is_infinite() {
            return 0.0;
        }
        match self {
            ErrorFamily::Logistic => {
                // even function; evaluate on the negative side for stability
                let a = -z.abs();
                a * self.cdf(a) - softplus(a)
            }
            ErrorFamily::Normal => -self.pdf(z),
        }
    }

    pub fn variance(self) -> f64 {
        match self {
            ErrorFamily::Logistic => PI * PI / 3.0,
            ErrorFamily::Normal => 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorFamily::Logistic => {
                let u: f64 = Open01.sample(rng);
                (u / (1.0 - u)).ln()
            }
            ErrorFamily::Normal => StandardNormal.sample(rng),
        }
    }
}

/// Location-scale law of a customer's per-unit value, `v = mu + sigma * eps`.
///
/// `sigma = 0` is a point mass at `mu`; intervals are treated as `[lo, hi)`.
#[derive(Debug, Clone, Copy)]
pub struct ValueLaw {
    pub mean: f64,
    pub sigma: f64,
    pub family: ErrorFamily,
}

impl ValueLaw {
    /// `P(v < x)`.
    pub fn prob_below(&self, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        if self.sigma == 0.0 {
            return if self.mean < x { 1.0 } else { 0.0 };
        }
        self.family.cdf((x - self.mean) / self.sigma)
    }

    /// `P(lo <= v < hi)`, computed on the shorter tail for precision.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        if self.sigma > 0.0 && lo > self.mean {
            let above = |x: f64| {
                if x == f64::INFINITY {
                    0.0
                } else {
                    self.family.cdf((self.mean - x) / self.sigma)
                }
            };
            return (above(lo) - above(hi)).max(0.0);
        }
        (self.prob_below(hi) - self.prob_below(lo)).max(0.0)
    }

    /// `E[v; lo <= v < hi]`.
    pub fn partial_expectation(&self, lo: f64, hi: f64) -> f64 {
        let m = self.mass(lo, hi);
        if self.sigma == 0.0 {
            return self.mean * m;
        }
        let h = |x: f64| {
            if x.is_infinite() {
                0.0
            } else {
                self.family.partial_moment((x - self.mean) / self.sigma)
            }
        };
        self.mean * m + self.sigma * (h(hi) - h(lo))
    }

    /// `E[max(v - t, 0)]`.
    pub fn expected_excess(&self, t: f64) -> f64 {
        if self.sigma == 0.0 {
            return (self.mean - t).max(0.0);
        }
        let y = (self.mean - t) / self.sigma;
        let tail = match self.family {
            ErrorFamily::Logistic => softplus(y),
            ErrorFamily::Normal => {
                y * self.family.cdf(y) + self.family.pdf(y)
            }
        };
        self.sigma * tail
    }
}

/// Parameters of the per-unit value regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueModel {
    /// Coefficients by covariate name, `$/unit`. The intercept is the
    /// covariate named [`INTERCEPT`], implicitly 1 on every record.
    pub beta: Vec<(String, f64)>,
    /// Year fixed effects; the base year is present with effect 0.
    pub year_effects: BTreeMap<i32, f64>,
    /// Size fixed effects, one per estimation bin, first normalized to 0.
    pub size_effects: Vec<f64>,
    pub size_bins: BinEdges,
    pub sigma: f64,
    pub error_family: ErrorFamily,
    /// Curvature of the value function in `(0, 1]`; 1 is piecewise linear.
    #[serde(default = "one")]
    pub smoothness: f64,
}

fn one() -> f64 {
    1.0
}

impl ValueModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return domain(format!("sigma must be positive, got {}", self.sigma));
        }
        self.validate_shape()
    }

    /// Everything [`validate`](Self::validate) checks except `sigma > 0`;
    /// a zero scale makes every value deterministic.
    pub fn validate_point_mass_allowed(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return domain(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        self.validate_shape()
    }

    fn validate_shape(&self) -> Result<()> {
        if !(self.smoothness > 0.0 && self.smoothness <= 1.0) {
            return domain(format!("smoothness must lie in (0, 1], got {}", self.smoothness));
        }
        if self.size_effects.len() != self.size_bins.len() {
            return Err(Error::Config(format!(
                "{} size effects for {} estimation bins",
                self.size_effects.len(),
                self.size_bins.len()
            )));
        }
        Ok(())
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.beta.iter().find(|(n, _)| n == name).map(|(_, b)| *b)
    }

    /// `beta . X`, without year or size effects.
    pub fn covariate_index(&self, c: &CustomerRecord) -> Result<f64> {
        let mut acc = 0.0;
        for (name, b) in &self.beta {
            let x = match c.covariates.get(name) {
                Some(x) => *x,
                None if name == INTERCEPT => 1.0,
                None => {
                    return Err(Error::Config(format!(
                        "customer `{}` is missing covariate `{name}`",
                        c.id
                    )))
                }
            };
            acc += b * x;
        }
        Ok(acc)
    }

    pub fn year_effect(&self, year: i32) -> Result<f64> {
        self.year_effects
            .get(&year)
            .copied()
            .ok_or_else(|| Error::Config(format!("no effect for year `{year}`")))
    }

    pub fn size_effect(&self, size: u32) -> Result<f64> {
        let k = self
            .size_bins
            .index_of_size(size)
            .ok_or_else(|| Error::Config(format!("size {size} maps to no estimation bin")))?;
        self.size_effects
            .get(k)
            .copied()
            .ok_or_else(|| Error::Config(format!("no size effect for bin {k}")))
    }

    pub fn law(&self, mean: f64) -> ValueLaw {
        ValueLaw {
            mean,
            sigma: self.sigma,
            family: self.error_family,
        }
    }
}

/// `mu_it = beta . X_i + alpha_t + gamma_bin(size)`.
pub fn mean_value(m: &ValueModel, c: &CustomerRecord) -> Result<f64> {
    Ok(m.covariate_index(c)? + m.year_effect(c.year)? + m.size_effect(c.size)?)
}

/// Willingness to pay for `q` units.
pub fn gross_value(m: &ValueModel, v: f64, size: u32, q: f64) -> Result<f64> {
    if q < 0.0 || q.is_nan() {
        return domain(format!("quantity must be nonnegative, got {q}"));
    }
    if size == 0 {
        return domain("size must be at least 1");
    }
    Ok(gross_value_unchecked(m.smoothness, v, size, q))
}

/// `v * size^(1-alpha) * min(q, size)^alpha`, which is `v * min(q, size)`
/// at `alpha = 1` and agrees with it at every `q >= size`.
#[inline]
pub(crate) fn gross_value_unchecked(alpha: f64, v: f64, size: u32, q: f64) -> f64 {
    let s = size as f64;
    if q >= s {
        return v * s;
    }
    if alpha == 1.0 {
        v * q
    } else {
        v * s.powf(1.0 - alpha) * q.powf(alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table2_model() -> ValueModel {
        ValueModel {
            beta: vec![(INTERCEPT.into(), 2260.56)],
            year_effects: BTreeMap::from([(2021, 0.0)]),
            size_effects: vec![0.0, -657.40, -835.73],
            size_bins: BinEdges::new(vec![1, 20, 50]).unwrap(),
            sigma: 385.44,
            error_family: ErrorFamily::Logistic,
            smoothness: 1.0,
        }
    }

    fn customer(size: u32) -> CustomerRecord {
        CustomerRecord {
            id: "c".into(),
            year: 2021,
            covariates: BTreeMap::new(),
            size,
            success: false,
            observed_unit_price: 0.0,
            snc_value: 0.0,
        }
    }

    #[test]
    fn intercept_only_mean() {
        let m = table2_model();
        assert_eq!(mean_value(&m, &customer(5)).unwrap(), 2260.56);
        assert_relative_eq!(mean_value(&m, &customer(25)).unwrap(), 1603.16, epsilon = 1e-9);
    }

    #[test]
    fn zero_coefficients_give_zero_mean() {
        let mut m = table2_model();
        m.beta[0].1 = 0.0;
        m.size_effects = vec![0.0; 3];
        assert_eq!(mean_value(&m, &customer(60)).unwrap(), 0.0);
    }

    #[test]
    fn missing_keys_are_named() {
        let mut m = table2_model();
        m.beta.push(("log_firm_age".into(), -40.99));
        let err = mean_value(&m, &customer(5)).unwrap_err().to_string();
        assert!(err.contains("log_firm_age"), "{err}");
        let mut c = customer(5);
        c.covariates.insert("log_firm_age".into(), 1.0);
        c.year = 2019;
        let err = mean_value(&m, &c).unwrap_err().to_string();
        assert!(err.contains("2019"), "{err}");
    }

    #[test]
    fn gross_value_examples() {
        let mut m = table2_model();
        assert_eq!(gross_value(&m, 2200.0, 120, 150.0).unwrap(), 264000.0);
        assert_eq!(gross_value(&m, 2200.0, 120, 0.0).unwrap(), 0.0);
        assert!(gross_value(&m, 2200.0, 120, -1.0).is_err());
        m.smoothness = 0.75;
        assert_eq!(gross_value(&m, 1.0, 200, 200.0).unwrap(), 200.0);
        assert_eq!(gross_value(&m, 7.0, 200, 0.0).unwrap(), 0.0);
        // diminishing returns: more than linear share below the size
        assert!(gross_value(&m, 1.0, 200, 100.0).unwrap() > 100.0);
    }

    #[test]
    fn logistic_partial_moment_matches_quadrature() {
        let fam = ErrorFamily::Logistic;
        for &z in &[-8.0, -1.5, 0.0, 0.7, 4.0] {
            // midpoint rule on [-60, z]
            let n = 200_000;
            let lo = -60.0;
            let h = (z - lo) / n as f64;
            let quad: f64 = (0..n)
                .map(|i| {
                    let t = lo + (i as f64 + 0.5) * h;
                    t * fam.pdf(t) * h
                })
                .sum();
            assert_relative_eq!(fam.partial_moment(z), quad, epsilon = 1e-7);
        }
    }

    #[test]
    fn expected_excess_matches_partial_expectation() {
        for fam in [ErrorFamily::Logistic, ErrorFamily::Normal] {
            let law = ValueLaw { mean: 2000.0, sigma: 300.0, family: fam };
            for &t in &[500.0, 1900.0, 2100.0, 4000.0] {
                let direct = law.partial_expectation(t, f64::INFINITY) - t * law.mass(t, f64::INFINITY);
                assert_relative_eq!(law.expected_excess(t), direct, epsilon = 1e-8, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn normal_log_cdf_is_continuous_at_switch() {
        let f = ErrorFamily::Normal;
        let a = f.log_cdf(-30.0 + 1e-9);
        let b = f.log_cdf(-30.0 - 1e-9);
        assert_relative_eq!(a, b, max_relative = 1e-6);
        let (d1a, _) = f.log_cdf_derivatives(-30.0 + 1e-9);
        let (d1b, _) = f.log_cdf_derivatives(-30.0 - 1e-9);
        assert_relative_eq!(d1a, d1b, max_relative = 1e-6);
    }

    #[test]
    fn point_mass_law() {
        let law = ValueLaw { mean: 10.0, sigma: 0.0, family: ErrorFamily::Logistic };
        assert_eq!(law.mass(10.0, 11.0), 1.0);
        assert_eq!(law.mass(9.0, 10.0), 0.0);
        assert_eq!(law.partial_expectation(f64::NEG_INFINITY, f64::INFINITY), 10.0);
    }
}
