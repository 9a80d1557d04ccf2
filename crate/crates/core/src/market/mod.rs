//! Customers, markets, costs and the value function.

mod bins;
mod synthetic;
mod value;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bins::{BinEdges, SizeBinConfig};
pub use synthetic::{generate_synthetic_market, CovariateDist, CovariateSpec, GeneratorSpec, SyntheticMarket};
pub use value::{
    gross_value, mean_value, softplus, ErrorFamily, ValueLaw, ValueModel, INTERCEPT,
};
pub(crate) use value::gross_value_unchecked;

use crate::error::{domain, Result};

/// One potential deal, successful or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerRecord {
    pub id: String,
    pub year: i32,
    pub covariates: BTreeMap<String, f64>,
    /// Intended number of units, at least 1.
    pub size: u32,
    pub success: bool,
    /// `$/unit` faced for `size` units.
    pub observed_unit_price: f64,
    /// Service-and-consulting cost attached to the deal, `$/deal`.
    pub snc_value: f64,
}

impl CustomerRecord {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return domain(format!("record `{}`: size must be at least 1", self.id));
        }
        if !(self.observed_unit_price >= 0.0) || !self.observed_unit_price.is_finite() {
            return domain(format!(
                "record `{}`: unit price must be a nonnegative number, got {}",
                self.id, self.observed_unit_price
            ));
        }
        if !(self.snc_value >= 0.0) || !self.snc_value.is_finite() {
            return domain(format!("record `{}`: snc must be nonnegative", self.id));
        }
        Ok(())
    }
}

/// Per-customer fixed cost `c1` and marginal cost `c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub c1: f64,
    pub c2: f64,
}

impl CostParams {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 >= 0.0 && c2 >= 0.0) {
            return domain(format!("costs must be nonnegative, got c1={c1}, c2={c2}"));
        }
        Ok(Self { c1, c2 })
    }

    pub fn zero() -> Self {
        Self { c1: 0.0, c2: 0.0 }
    }

    /// Cost of serving `q` units; zero when nothing is sold.
    #[inline]
    pub fn serve(&self, q: f64) -> f64 {
        if q > 0.0 {
            self.c1 + self.c2 * q
        } else {
            0.0
        }
    }
}

/// What pricing needs to know about one customer: its size and mean value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CustomerType {
    pub size: u32,
    pub mean_value: f64,
}

/// Potential customers plus the value law and costs that describe them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Market {
    pub customers: Vec<CustomerRecord>,
    pub value_model: ValueModel,
    pub costs: CostParams,
    pub bins: SizeBinConfig,
}

impl Market {
    pub fn new(
        customers: Vec<CustomerRecord>,
        value_model: ValueModel,
        costs: CostParams,
        bins: SizeBinConfig,
    ) -> Self {
        Self {
            customers,
            value_model,
            costs,
            bins,
        }
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    pub fn customer_types(&self) -> Result<Vec<CustomerType>> {
        self.customers
            .iter()
            .map(|c| {
                Ok(CustomerType {
                    size: c.size,
                    mean_value: mean_value(&self.value_model, c)?,
                })
            })
            .collect()
    }

    /// Empirical size distribution, uniform weight per customer.
    pub fn size_pmf(&self) -> BTreeMap<u32, f64> {
        let n = self.customers.len() as f64;
        let mut pmf = BTreeMap::new();
        for c in &self.customers {
            *pmf.entry(c.size).or_insert(0.0) += 1.0;
        }
        pmf.values_mut().for_each(|w| *w /= n);
        pmf
    }

    /// Same market restricted to the given customers, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Market {
        Market {
            customers: indices.iter().map(|&i| self.customers[i].clone()).collect(),
            value_model: self.value_model.clone(),
            costs: self.costs,
            bins: self.bins.clone(),
        }
    }

    pub fn with_costs(&self, costs: CostParams) -> Market {
        Market {
            costs,
            ..self.clone()
        }
    }

    /// Indices of customers whose size falls in pricing bin `k`.
    pub fn pricing_segment(&self, k: usize) -> Vec<usize> {
        self.customers
            .iter()
            .enumerate()
            .filter(|(_, c)| self.bins.pricing_bins.contains(k, c.size))
            .map(|(i, _)| i)
            .collect()
    }
}
