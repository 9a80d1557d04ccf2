//! Demand estimation and nonlinear pricing for markets where customers
//! differ in both how much they value a unit and how many units they need.
//!
//! The crate covers the full loop: a value model with size-bin effects,
//! posted price schedules, customer purchase decisions, maximum-likelihood
//! estimation from won and lost deals, profit-maximizing schedule search,
//! and counterfactual pricing regimes.

pub mod choice;
pub mod counterfactual;
pub mod error;
pub mod estimation;
pub mod io;
pub mod market;
pub mod profit;
pub mod tariff;

pub use error::{Error, Result};
