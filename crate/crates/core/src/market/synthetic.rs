//! Seeded synthetic markets with known latent values.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    mean_value, CostParams, CustomerRecord, ErrorFamily, Market, SizeBinConfig,
    ValueModel, INTERCEPT,
};
use crate::error::{domain, Error, Result};
use crate::tariff::PriceSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum CovariateDist {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    Uniform { lo: f64, hi: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub dist: CovariateDist,
}

/// Everything needed to draw a market. `value_model.sigma` may be zero here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_customers: usize,
    pub covariates: Vec<CovariateSpec>,
    /// Categorical distribution over years, as `(year, weight)`.
    pub years: Vec<(i32, f64)>,
    /// Categorical distribution over sizes, as `(size, weight)`.
    pub size_pmf: Vec<(u32, f64)>,
    /// Categorical distribution over SNC values, as `(value, weight)`.
    pub snc_tiers: Vec<(f64, f64)>,
    pub value_model: ValueModel,
    pub costs: CostParams,
    pub bins: SizeBinConfig,
    /// The schedule customers faced; a customer succeeds iff its value is at
    /// least the average price of its size.
    pub observed_schedule: PriceSchedule,
}

/// A generated market and, for oracles only, the realized values.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub market: Market,
    pub latent_values: Vec<f64>,
}

impl GeneratorSpec {
    /// Sizes shaped like small-business deal data: most deals under 20
    /// units, a thin tail past 100.
    pub fn default_size_pmf() -> Vec<(u32, f64)> {
        vec![
            (1, 0.06),
            (2, 0.06),
            (3, 0.05),
            (4, 0.06),
            (5, 0.05),
            (6, 0.04),
            (8, 0.05),
            (10, 0.06),
            (12, 0.04),
            (15, 0.05),
            (18, 0.03),
            (20, 0.06),
            (25, 0.05),
            (30, 0.05),
            (40, 0.05),
            (50, 0.04),
            (60, 0.04),
            (80, 0.04),
            (100, 0.03),
            (120, 0.03),
            (150, 0.03),
            (200, 0.03),
        ]
    }

    /// A concave current schedule with declining incremental rates.
    pub fn default_observed_schedule() -> PriceSchedule {
        PriceSchedule::continuous(
            &SizeBinConfig::default().pricing_bins,
            vec![2750.0, 2550.0, 2350.0, 2150.0, 1950.0],
        )
        .expect("valid schedule")
    }

    /// The full regression from the reference estimates: five covariates,
    /// a 2020/2021 year effect, three size groups, logistic shocks.
    pub fn reference(n_customers: usize) -> Self {
        let bins = SizeBinConfig::default();
        let value_model = ValueModel {
            beta: vec![
                (INTERCEPT.into(), 2260.56),
                ("log_feature_1".into(), 133.79),
                ("feature_2".into(), 686.64),
                ("computer_software".into(), 39.18),
                ("marketing_advertising".into(), -224.29),
                ("log_firm_age".into(), -40.99),
            ],
            year_effects: BTreeMap::from([(2020, 0.0), (2021, 70.2)]),
            size_effects: vec![0.0, -657.40, -835.73],
            size_bins: bins.estimation_bins.clone(),
            sigma: 385.44,
            error_family: ErrorFamily::Logistic,
            smoothness: 1.0,
        };
        Self {
            n_customers,
            covariates: vec![
                CovariateSpec {
                    name: "log_feature_1".into(),
                    dist: CovariateDist::Normal { mean: 1.0, sd: 1.0 },
                },
                CovariateSpec {
                    name: "feature_2".into(),
                    dist: CovariateDist::Bernoulli { p: 0.3 },
                },
                CovariateSpec {
                    name: "computer_software".into(),
                    dist: CovariateDist::Bernoulli { p: 0.2 },
                },
                CovariateSpec {
                    name: "marketing_advertising".into(),
                    dist: CovariateDist::Bernoulli { p: 0.1 },
                },
                CovariateSpec {
                    name: "log_firm_age".into(),
                    dist: CovariateDist::Normal { mean: 2.5, sd: 0.8 },
                },
            ],
            years: vec![(2020, 0.45), (2021, 0.55)],
            size_pmf: Self::default_size_pmf(),
            snc_tiers: vec![(1868.0, 0.5), (4670.0, 0.35), (9340.0, 0.15)],
            value_model,
            costs: CostParams { c1: 3630.0, c2: 760.0 },
            bins,
            observed_schedule: Self::default_observed_schedule(),
        }
    }

    /// Intercept, size groups and scale from the reference estimates, with
    /// two high-variance covariates and a single year. The observed
    /// schedule is steep enough that unit prices sweep past the mean value
    /// inside every size group; price variation is what separates the
    /// scale from the level.
    pub fn recovery(n_customers: usize) -> Self {
        let mut spec = Self::reference(n_customers);
        spec.observed_schedule = PriceSchedule::continuous(
            &SizeBinConfig::default().pricing_bins,
            vec![3200.0, 1000.0, 1000.0, 900.0, 700.0],
        )
        .expect("valid schedule");
        spec.value_model.beta = vec![
            (INTERCEPT.into(), 2260.56),
            ("log_feature_1".into(), 133.79),
            ("feature_2".into(), 686.64),
        ];
        spec.value_model.year_effects = BTreeMap::from([(2021, 0.0)]);
        spec.covariates = vec![
            CovariateSpec {
                name: "log_feature_1".into(),
                dist: CovariateDist::Normal { mean: 0.5, sd: 2.0 },
            },
            CovariateSpec {
                name: "feature_2".into(),
                dist: CovariateDist::Bernoulli { p: 0.5 },
            },
        ];
        spec.years = vec![(2021, 1.0)];
        spec
    }

    fn validate(&self) -> Result<()> {
        if self.n_customers == 0 {
            return domain("customer count must be positive");
        }
        if !(self.value_model.sigma >= 0.0) {
            return domain("generator sigma must be nonnegative");
        }
        if self.size_pmf.iter().any(|(s, _)| *s == 0) {
            return domain("sizes must be at least 1");
        }
        for (name, _) in &self.value_model.beta {
            if name != INTERCEPT && !self.covariates.iter().any(|c| &c.name == name) {
                return Err(Error::Config(format!("no distribution for covariate `{name}`")));
            }
        }
        self.observed_schedule.validate()
    }
}

fn categorical<T: Copy>(items: &[(T, f64)], what: &str) -> Result<(Vec<T>, WeightedIndex<f64>)> {
    let weights = WeightedIndex::new(items.iter().map(|(_, w)| *w))
        .map_err(|e| Error::Domain(format!("{what} weights: {e}")))?;
    Ok((items.iter().map(|(v, _)| *v).collect(), weights))
}

/// Draws a market. Per customer, in order: year, size, covariates (in spec
/// order), SNC tier, value shock.
pub fn generate_synthetic_market(spec: &GeneratorSpec, seed: u64) -> Result<SyntheticMarket> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (years, year_w) = categorical(&spec.years, "year")?;
    let (sizes, size_w) = categorical(&spec.size_pmf, "size")?;
    let (tiers, tier_w) = categorical(&spec.snc_tiers, "snc")?;
    let width = spec.n_customers.to_string().len().max(6);

    let mut customers = Vec::with_capacity(spec.n_customers);
    let mut latent = Vec::with_capacity(spec.n_customers);
    for i in 0..spec.n_customers {
        let year = years[year_w.sample(&mut rng)];
        let size = sizes[size_w.sample(&mut rng)];
        let mut covariates = BTreeMap::new();
        for c in &spec.covariates {
            let x = match c.dist {
                CovariateDist::Normal { mean, sd } => Normal::new(mean, sd)
                    .map_err(|e| Error::Domain(format!("covariate `{}`: {e}", c.name)))?
                    .sample(&mut rng),
                CovariateDist::Bernoulli { p } => {
                    if rng.random::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                }
                CovariateDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
                CovariateDist::Constant { value } => value,
            };
            covariates.insert(c.name.clone(), x);
        }
        let snc_value = tiers[tier_w.sample(&mut rng)];
        let shock = spec.value_model.error_family.sample(&mut rng);

        let mut record = CustomerRecord {
            id: format!("c{:0width$}", i, width = width),
            year,
            covariates,
            size,
            success: false,
            observed_unit_price: spec.observed_schedule.unit_price(size as f64)?,
            snc_value,
        };
        let mu = mean_value(&spec.value_model, &record)?;
        let v = mu + spec.value_model.sigma * shock;
        record.success = v >= record.observed_unit_price;
        customers.push(record);
        latent.push(v);
    }

    Ok(SyntheticMarket {
        market: Market::new(customers, spec.value_model.clone(), spec.costs, spec.bins.clone()),
        latent_values: latent,
    })
}

impl Market {
    /// A market of customers given directly as `(size, mean value)` pairs,
    /// sharing one scale and error family. `sigma = 0` makes every value
    /// deterministic.
    pub fn from_types(
        types: &[(u32, f64)],
        sigma: f64,
        family: ErrorFamily,
        costs: CostParams,
        bins: SizeBinConfig,
    ) -> Market {
        let customers = types
            .iter()
            .enumerate()
            .map(|(i, &(size, v))| CustomerRecord {
                id: format!("t{i}"),
                year: 0,
                covariates: BTreeMap::from([(TYPE_VALUE.to_string(), v)]),
                size,
                success: true,
                observed_unit_price: 0.0,
                snc_value: 0.0,
            })
            .collect();
        let value_model = ValueModel {
            beta: vec![(TYPE_VALUE.into(), 1.0)],
            year_effects: BTreeMap::from([(0, 0.0)]),
            size_effects: vec![0.0; bins.estimation_bins.len()],
            size_bins: bins.estimation_bins.clone(),
            sigma,
            error_family: family,
            smoothness: 1.0,
        };
        Market::new(customers, value_model, costs, bins)
    }
}

const TYPE_VALUE: &str = "type_value";
