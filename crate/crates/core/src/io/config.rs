//! Run configuration: a flat `key = value` file plus `key=value` overrides.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimation::{CostCalibration, EstimationConfig};
use crate::market::{ErrorFamily, SizeBinConfig};
use crate::profit::{McConfig, OptimizeConfig, Optimizer, ScheduleFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Reference,
    Recovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    FirstDegree,
    ThirdDegreeSize,
    CovariateGroups,
    Homogenized,
    IcGap,
    CostSweep,
    Experiment,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::FirstDegree,
        Scenario::ThirdDegreeSize,
        Scenario::CovariateGroups,
        Scenario::Homogenized,
        Scenario::IcGap,
        Scenario::CostSweep,
        Scenario::Experiment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::FirstDegree => "first_degree",
            Scenario::ThirdDegreeSize => "third_degree_size",
            Scenario::CovariateGroups => "covariate_groups",
            Scenario::Homogenized => "homogenized",
            Scenario::IcGap => "ic_gap",
            Scenario::CostSweep => "cost_sweep",
            Scenario::Experiment => "experiment",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Everything a command needs. Unset optional keys fall back to the
/// library defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Fit to reuse instead of estimating again.
    pub fit: Option<PathBuf>,
    /// Master seed; required by every stochastic command.
    pub seed: Option<u64>,
    pub preset: Preset,
    pub customers: usize,
    pub estimation: EstimationConfig,
    /// Current schedule, continuous over the pricing bins, used to drop
    /// deals in its dips. No filtering when unset.
    pub observed_rates: Option<Vec<f64>>,
    pub calibration: CostCalibration,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    /// Year every customer is placed in for pricing.
    pub analysis_year: Option<i32>,
    pub families: Vec<ScheduleFamily>,
    pub optimize: OptimizeConfig,
    /// Resamples for confidence bands on the optimal via-origin rates.
    pub schedule_bootstrap_reps: usize,
    pub scenarios: Vec<Scenario>,
    pub groups: Vec<usize>,
    pub c1_list: Vec<f64>,
    pub c2_list: Vec<f64>,
    /// Outcome modification applied before fitting: with this probability
    /// a deal's outcome is set to membership in `favored_bin`.
    pub flip_prob: Option<f64>,
    pub favored_bin: usize,
    pub experiment_rows: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            output_dir: PathBuf::from("out"),
            fit: None,
            seed: None,
            preset: Preset::Reference,
            customers: 2000,
            estimation: EstimationConfig::default(),
            observed_rates: None,
            calibration: CostCalibration::default(),
            c1: None,
            c2: None,
            analysis_year: None,
            families: vec![ScheduleFamily::Linear, ScheduleFamily::ViaOrigin],
            optimize: OptimizeConfig::default(),
            schedule_bootstrap_reps: 0,
            scenarios: vec![
                Scenario::FirstDegree,
                Scenario::ThirdDegreeSize,
                Scenario::IcGap,
                Scenario::Homogenized,
            ],
            groups: vec![1, 2, 4],
            c1_list: vec![0.0],
            c2_list: vec![],
            flip_prob: None,
            favored_bin: 1,
            experiment_rows: 100_000,
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("`{key}`: expected {what}, got `{value}`"))
}

fn list<T>(key: &str, value: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).ok_or_else(|| bad(key, s, what)))
        .collect()
}

impl RunConfig {
    pub const KEYS: [&'static str; 37] = [
        "input",
        "output_dir",
        "fit",
        "seed",
        "preset",
        "customers",
        "error_family",
        "covariates",
        "optimizer_tolerance",
        "sigma_floor",
        "max_iterations",
        "restarts",
        "augment",
        "bootstrap_reps",
        "observed_rates",
        "setup_cost",
        "snc_fixed_share",
        "per_unit_cost",
        "c1",
        "c2",
        "analysis_year",
        "families",
        "optimizer",
        "points_per_dim",
        "zoom",
        "stop_width",
        "rate_max",
        "fee_max",
        "mc_draws",
        "schedule_bootstrap_reps",
        "scenarios",
        "groups",
        "c1_list",
        "c2_list",
        "flip_prob",
        "favored_bin",
        "experiment_rows",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let f64_ = |what: &str| value.parse::<f64>().map_err(|_| bad(key, value, what));
        let usize_ = || value.parse::<usize>().map_err(|_| bad(key, value, "a whole number"));
        let bool_ = || match value {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(bad(key, value, "true or false")),
        };
        match key {
            "input" => self.input = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "fit" => self.fit = Some(PathBuf::from(value)),
            "seed" => self.seed = Some(value.parse().map_err(|_| bad(key, value, "an unsigned integer"))?),
            "preset" => {
                self.preset = match value {
                    "reference" => Preset::Reference,
                    "recovery" => Preset::Recovery,
                    _ => return Err(bad(key, value, "reference or recovery")),
                }
            }
            "customers" => self.customers = usize_()?,
            "error_family" => {
                self.estimation.error_family = match value {
                    "logistic" => ErrorFamily::Logistic,
                    "normal" => ErrorFamily::Normal,
                    _ => return Err(bad(key, value, "logistic or normal")),
                }
            }
            "covariates" => self.estimation.covariate_names = list(key, value, "a name", |s| Some(s.to_string()))?,
            "optimizer_tolerance" => self.estimation.optimizer_tolerance = f64_("a number")?,
            "sigma_floor" => self.estimation.sigma_floor = f64_("a number")?,
            "max_iterations" => self.estimation.max_iterations = usize_()?,
            "restarts" => self.estimation.restarts = usize_()?,
            "augment" => self.estimation.augment = bool_()?,
            "bootstrap_reps" => self.estimation.bootstrap_reps = usize_()?,
            "observed_rates" => self.observed_rates = Some(list(key, value, "a number", |s| s.parse().ok())?),
            "setup_cost" => self.calibration.setup_cost = f64_("a number")?,
            "snc_fixed_share" => self.calibration.snc_fixed_share = f64_("a number")?,
            "per_unit_cost" => self.calibration.per_unit_cost = f64_("a number")?,
            "c1" => self.c1 = Some(f64_("a number")?),
            "c2" => self.c2 = Some(f64_("a number")?),
            "analysis_year" => self.analysis_year = Some(value.parse().map_err(|_| bad(key, value, "a year"))?),
            "families" => self.families = list(key, value, "a schedule family", ScheduleFamily::parse)?,
            "optimizer" => {
                self.optimize.optimizer = match value {
                    "grid_bisection" => Optimizer::GridBisection,
                    "nelder_mead" => Optimizer::NelderMead,
                    _ => return Err(bad(key, value, "grid_bisection or nelder_mead")),
                }
            }
            "points_per_dim" => self.optimize.points_per_dim = usize_()?,
            "zoom" => self.optimize.zoom = f64_("a number")?,
            "stop_width" => self.optimize.stop_width = f64_("a number")?,
            "rate_max" => self.optimize.rate_bounds.1 = f64_("a number")?,
            "fee_max" => self.optimize.fee_bounds.1 = f64_("a number")?,
            "mc_draws" => {
                self.optimize.mc = McConfig {
                    draws: usize_()?,
                    ..self.optimize.mc
                }
            }
            "schedule_bootstrap_reps" => self.schedule_bootstrap_reps = usize_()?,
            "scenarios" => self.scenarios = list(key, value, "a scenario name", Scenario::parse)?,
            "groups" => self.groups = list(key, value, "a group count", |s| s.parse().ok())?,
            "c1_list" => self.c1_list = list(key, value, "a number", |s| s.parse().ok())?,
            "c2_list" => self.c2_list = list(key, value, "a number", |s| s.parse().ok())?,
            "flip_prob" => self.flip_prob = Some(f64_("a probability")?),
            "favored_bin" => self.favored_bin = usize_()?,
            "experiment_rows" => self.experiment_rows = usize_()?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are
    /// skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not `key=value`")))?;
        self.set(k.trim(), v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(c)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("this command is stochastic; set `seed`".into()))
    }

    pub fn bins(&self) -> SizeBinConfig {
        self.estimation.bins.clone()
    }

    pub fn validate(&self) -> Result<()> {
        self.estimation.validate()?;
        if let Some(p) = self.flip_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("`flip_prob` must lie in [0, 1], got {p}")));
            }
        }
        if self.families.is_empty() {
            return Err(Error::Config("`families` is empty".into()));
        }
        Ok(())
    }
}
