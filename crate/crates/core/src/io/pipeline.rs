//! Command stages and the pipeline that runs them, writing a MANIFEST of
//! what completed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{Preset, RunConfig, Scenario};
use super::deals::{ingest_deals, write_deals_file};
use super::output::{cents, emit_plot_data, read_json, write_json, PlotSeries};
use crate::counterfactual::{
    cost_sweep, experimental_recovery, homogenize_demand, ic_gap_analysis, ordering_chain, simulate_counterfactual_outcomes,
    simulate_experiment, third_degree_by_covariates, total_variation, true_joint, write_scenario_csv, write_segment_csv,
    ExperimentConfig, ScenarioResult,
};
use crate::error::{Error, Result};
use crate::estimation::{
    augment_zero_price, bootstrap, bootstrap_fit, calibrate_costs, empirical_size_distribution, filter_concavity_dips,
    fit_mle, FitResult,
};
use crate::market::{generate_synthetic_market, CostParams, CustomerRecord, GeneratorSpec, Market};
use crate::profit::{optimize_schedule, optimize_schedule_seeded, OptimizedSchedule, ScheduleFamily};
use crate::tariff::PriceSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Ingest,
    Fit,
    Calibrate,
    Optimize,
    Counterfactual,
    Bootstrap,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Ingest => "ingest",
            Stage::Fit => "fit",
            Stage::Calibrate => "calibrate",
            Stage::Optimize => "optimize",
            Stage::Counterfactual => "counterfactual",
            Stage::Bootstrap => "bootstrap",
        }
    }

    /// Stages run by the `report` command.
    pub const REPORT: [Stage; 5] = [
        Stage::Ingest,
        Stage::Fit,
        Stage::Calibrate,
        Stage::Optimize,
        Stage::Counterfactual,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageStatus {
    Completed(Vec<String>),
    Failed(String),
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub stages: Vec<(Stage, StageStatus)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = String::from("format_version\t1\n");
        for (stage, status) in &self.stages {
            let line = match status {
                StageStatus::Completed(files) => format!("{}\tcompleted\t{}", stage.name(), files.join(",")),
                StageStatus::Failed(msg) => format!("{}\tfailed\t{}", stage.name(), msg.replace(['\n', '\t'], " ")),
                StageStatus::NotRun => format!("{}\tnot_run\t", stage.name()),
            };
            let _ = writeln!(s, "{line}");
        }
        s
    }

    pub fn completed(&self) -> bool {
        self.stages.iter().all(|(_, s)| matches!(s, StageStatus::Completed(_)))
    }
}

#[derive(Default)]
struct Context {
    records: Option<Vec<CustomerRecord>>,
    covariates: Vec<String>,
    fit: Option<FitResult>,
    costs: Option<CostParams>,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Out<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub value_model: crate::market::ValueModel,
    pub costs: CostParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub kept: usize,
    pub dropped_dips: usize,
    pub covariates: Vec<String>,
    pub ignored_columns: Vec<String>,
    pub size_pmf: std::collections::BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStamp {
    pub profits: Vec<(String, f64)>,
    pub min_slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualReport {
    pub scenarios: Vec<ScenarioResult>,
    pub ordering_chain: ChainStamp,
    pub ic_gap: Option<IcGapSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcGapSummary {
    pub optimal_profit: f64,
    pub individual_profit: f64,
    pub third_degree_profit: f64,
    pub relative_gap: f64,
    pub optimal_rates: Vec<f64>,
    pub individual_rates: Vec<f64>,
    pub segment_differences: Vec<(String, f64)>,
}

fn need<T: Clone>(x: &Option<T>, what: &str) -> Result<T> {
    x.clone().ok_or_else(|| Error::Config(format!("{what} is not available at this stage")))
}

fn input_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.input
        .as_deref()
        .ok_or_else(|| Error::Config("no input file given; set `input`".into()))
}

fn load_records(cfg: &RunConfig, ctx: &mut Context) -> Result<Vec<CustomerRecord>> {
    if ctx.records.is_none() {
        let known = (!cfg.estimation.covariate_names.is_empty()).then_some(cfg.estimation.covariate_names.as_slice());
        let ing = ingest_deals(input_path(cfg)?, known)?;
        ctx.covariates = ing.covariates;
        ctx.records = Some(ing.records);
    }
    need(&ctx.records, "deal data")
}

fn load_fit(cfg: &RunConfig, ctx: &mut Context) -> Result<FitResult> {
    if ctx.fit.is_none() {
        ctx.fit = Some(match &cfg.fit {
            Some(p) => read_json(p, "fit")?,
            None => estimate(cfg, ctx)?.0,
        });
    }
    need(&ctx.fit, "a fit")
}

fn load_costs(cfg: &RunConfig, ctx: &mut Context) -> Result<CostParams> {
    if ctx.costs.is_none() {
        let records = load_records(cfg, ctx)?;
        ctx.costs = Some(costs_for(cfg, &records)?);
    }
    need(&ctx.costs, "costs")
}

fn costs_for(cfg: &RunConfig, records: &[CustomerRecord]) -> Result<CostParams> {
    let cal = match (cfg.c1, cfg.c2) {
        (Some(c1), Some(c2)) => return CostParams::new(c1, c2),
        _ => calibrate_costs(records, &cfg.calibration)?,
    };
    CostParams::new(cfg.c1.unwrap_or(cal.c1), cfg.c2.unwrap_or(cal.c2))
}

fn estimation_config(cfg: &RunConfig, ctx: &Context) -> crate::estimation::EstimationConfig {
    let mut e = cfg.estimation.clone();
    if e.covariate_names.is_empty() {
        e.covariate_names = ctx.covariates.clone();
    }
    e
}

/// Records as fitted: after the optional outcome modification.
fn fitting_records(cfg: &RunConfig, ctx: &mut Context) -> Result<(Vec<CustomerRecord>, bool)> {
    let records = load_records(cfg, ctx)?;
    match cfg.flip_prob {
        Some(p) => Ok((
            simulate_counterfactual_outcomes(&records, p, &cfg.bins().estimation_bins, cfg.favored_bin, false, cfg.seed()?)?,
            true,
        )),
        None => Ok((records, false)),
    }
}

fn estimate(cfg: &RunConfig, ctx: &mut Context) -> Result<(FitResult, Option<Vec<CustomerRecord>>)> {
    let (records, modified) = fitting_records(cfg, ctx)?;
    let ecfg = estimation_config(cfg, ctx);
    let fit = if ecfg.augment {
        fit_mle(&augment_zero_price(&records)?, &ecfg)?
    } else {
        fit_mle(&records, &ecfg)?
    };
    Ok((fit, modified.then_some(records)))
}

fn pricing_market(cfg: &RunConfig, records: &[CustomerRecord], fit: &FitResult, costs: CostParams) -> Result<Market> {
    let mut customers = records.to_vec();
    if let Some(y) = cfg.analysis_year {
        fit.value_model.year_effect(y)?;
        customers.iter_mut().for_each(|c| c.year = y);
    }
    Ok(Market::new(customers, fit.value_model.clone(), costs, cfg.bins()))
}

fn market(cfg: &RunConfig, ctx: &mut Context) -> Result<Market> {
    let records = load_records(cfg, ctx)?;
    let fit = load_fit(cfg, ctx)?;
    let costs = load_costs(cfg, ctx)?;
    pricing_market(cfg, &records, &fit, costs)
}

fn optimize_families(cfg: &RunConfig, m: &Market) -> Result<Vec<OptimizedSchedule>> {
    let linear = optimize_schedule(m, ScheduleFamily::Linear, &cfg.optimize)?;
    cfg.families
        .iter()
        .map(|&f| {
            if f == ScheduleFamily::Linear {
                Ok(linear.clone())
            } else {
                optimize_schedule_seeded(m, f, &cfg.optimize, &[linear.schedule.clone()])
            }
        })
        .collect()
}

fn run_stage(stage: Stage, cfg: &RunConfig, ctx: &mut Context, out: &mut Out) -> Result<()> {
    match stage {
        Stage::Simulate => {
            let seed = cfg.seed()?;
            let spec = match cfg.preset {
                Preset::Reference => GeneratorSpec::reference(cfg.customers),
                Preset::Recovery => GeneratorSpec::recovery(cfg.customers),
            };
            let syn = generate_synthetic_market(&spec, seed)?;
            write_deals_file(&syn.market.customers, &out.path("deals.csv"))?;
            let truth = Truth {
                value_model: spec.value_model.clone(),
                costs: spec.costs,
                seed,
            };
            write_json(&out.path("truth.json"), "truth", &truth)?;
        }
        Stage::Ingest => {
            let known = (!cfg.estimation.covariate_names.is_empty()).then_some(cfg.estimation.covariate_names.as_slice());
            let ing = ingest_deals(input_path(cfg)?, known)?;
            let rows = ing.records.len();
            let (kept, dropped) = match &cfg.observed_rates {
                Some(r) => {
                    let observed = PriceSchedule::continuous(&cfg.bins().pricing_bins, r.clone())?;
                    let f = filter_concavity_dips(&ing.records, &observed)?;
                    (f.kept, f.dropped)
                }
                None => (ing.records, 0),
            };
            let summary = IngestSummary {
                rows,
                kept: kept.len(),
                dropped_dips: dropped,
                covariates: ing.covariates.clone(),
                ignored_columns: ing.ignored_columns,
                size_pmf: empirical_size_distribution(&kept)?,
            };
            write_deals_file(&kept, &out.path("deals_clean.csv"))?;
            write_json(&out.path("ingest.json"), "ingest", &summary)?;
            ctx.covariates = ing.covariates;
            ctx.records = Some(kept);
        }
        Stage::Fit => {
            let (fit, modified) = match &cfg.fit {
                Some(p) => (read_json(p, "fit")?, None),
                None => estimate(cfg, ctx)?,
            };
            if let Some(m) = modified {
                write_deals_file(&m, &out.path("deals_modified.csv"))?;
            }
            info!(
                "fit: converged={} nll={:.3} sigma={:.2}",
                fit.converged, fit.neg_log_likelihood, fit.value_model.sigma
            );
            write_json(&out.path("fit.json"), "fit", &fit)?;
            ctx.fit = Some(fit);
        }
        Stage::Calibrate => {
            let records = load_records(cfg, ctx)?;
            let costs = costs_for(cfg, &records)?;
            write_json(&out.path("costs.json"), "costs", &costs)?;
            ctx.costs = Some(costs);
        }
        Stage::Optimize => {
            let m = market(cfg, ctx)?;
            let optima = optimize_families(cfg, &m)?;
            for o in &optima {
                let mut f = std::fs::File::create(out.path(&format!("trace_{}.csv", o.family.name())))?;
                o.trace.write_csv(&mut f)?;
            }
            let band = schedule_band(cfg, ctx, &m)?;
            write_json(&out.path("schedules.json"), "schedules", &optima)?;
            let observed = match &cfg.observed_rates {
                Some(r) => Some(PriceSchedule::continuous(&cfg.bins().pricing_bins, r.clone())?),
                None => None,
            };
            let mut series: Vec<PlotSeries> = Vec::new();
            if let Some(s) = &observed {
                series.push(PlotSeries {
                    scheme: "current",
                    schedule: s,
                    band: None,
                });
            }
            for o in &optima {
                series.push(PlotSeries {
                    scheme: o.family.name(),
                    schedule: &o.schedule,
                    band: (o.family == ScheduleFamily::ViaOrigin).then_some(band.as_deref()).flatten(),
                });
            }
            let f = std::fs::File::create(out.path("marginal_prices.csv"))?;
            emit_plot_data(&series, &cfg.bins().pricing_bins, f)?;
        }
        Stage::Counterfactual => counterfactuals(cfg, ctx, out)?,
        Stage::Bootstrap => {
            let seed = cfg.seed()?;
            let (records, _) = fitting_records(cfg, ctx)?;
            let mut ecfg = estimation_config(cfg, ctx);
            ecfg.seed = seed;
            if ecfg.bootstrap_reps == 0 {
                ecfg.bootstrap_reps = 100;
            }
            let summary = bootstrap_fit(&records, &ecfg)?;
            write_json(&out.path("bootstrap.json"), "bootstrap", &summary)?;
            let fit = load_fit(cfg, ctx)?.with_bootstrap(&summary);
            write_json(&out.path("fit_with_se.json"), "fit", &fit)?;
        }
    }
    Ok(())
}

/// Percentile band of the optimal via-origin rates over resampled fits.
fn schedule_band(cfg: &RunConfig, ctx: &mut Context, m: &Market) -> Result<Option<Vec<(f64, f64)>>> {
    if cfg.schedule_bootstrap_reps == 0 || !cfg.families.contains(&ScheduleFamily::ViaOrigin) {
        return Ok(None);
    }
    let seed = cfg.seed()?;
    let (records, _) = fitting_records(cfg, ctx)?;
    let ecfg = estimation_config(cfg, ctx);
    let s = bootstrap(&records, cfg.schedule_bootstrap_reps, seed, |sample| {
        let fit = if ecfg.augment {
            fit_mle(&augment_zero_price(sample)?, &ecfg)?
        } else {
            fit_mle(sample, &ecfg)?
        };
        let rm = Market::new(m.customers.clone(), fit.value_model, m.costs, m.bins.clone());
        let o = optimize_schedule(&rm, ScheduleFamily::ViaOrigin, &cfg.optimize)?;
        Ok(o.schedule.rates.iter().enumerate().map(|(k, r)| (format!("rate:{k}"), *r)).collect())
    })?;
    let n = m.bins.pricing_bins.len();
    Ok(Some(
        (0..n)
            .map(|k| {
                let key = format!("rate:{k}");
                (
                    s.lower.get(&key).copied().unwrap_or(f64::NAN),
                    s.upper.get(&key).copied().unwrap_or(f64::NAN),
                )
            })
            .collect(),
    ))
}

fn counterfactuals(cfg: &RunConfig, ctx: &mut Context, out: &mut Out) -> Result<()> {
    let m = market(cfg, ctx)?;
    let chain = ordering_chain(&m, &cfg.optimize)?;
    let mut scenarios: Vec<ScenarioResult> = chain.scenarios().into_iter().cloned().collect();
    let stamp = ChainStamp {
        profits: chain.scenarios().iter().map(|s| (s.label.clone(), s.profit)).collect(),
        min_slack: chain.min_slack(),
        holds: chain.min_slack() >= -1e-6,
    };
    let mut ic = None;
    for sc in &cfg.scenarios {
        match sc {
            Scenario::FirstDegree | Scenario::ThirdDegreeSize => {}
            Scenario::IcGap => {
                let g = ic_gap_analysis(&m, &cfg.optimize)?;
                ic = Some(IcGapSummary {
                    optimal_profit: g.optimal.report.expected_profit,
                    individual_profit: g.individual.true_profit,
                    third_degree_profit: g.third_degree_profit,
                    relative_gap: g.relative_gap,
                    optimal_rates: g.optimal.schedule.rates.clone(),
                    individual_rates: g.individual.schedule.rates.clone(),
                    segment_differences: g.segments.iter().map(|s| (s.bin.clone(), s.difference)).collect(),
                });
            }
            Scenario::CovariateGroups => {
                for &j in &cfg.groups {
                    let g = third_degree_by_covariates(&m, j, ScheduleFamily::ViaOrigin, &cfg.optimize, &[])?;
                    scenarios.push(g.result);
                }
            }
            Scenario::Homogenized => {
                let h = homogenize_demand(&m)?;
                let o = optimize_schedule(&h, ScheduleFamily::ViaOrigin, &cfg.optimize)?;
                scenarios.push(ScenarioResult::from_report("homogenized_via_origin", &o.report));
            }
            Scenario::CostSweep => {
                let c2 = if cfg.c2_list.is_empty() { vec![m.costs.c2] } else { cfg.c2_list.clone() };
                let sweep = cost_sweep(&m, &cfg.c1_list, &c2, &cfg.optimize)?;
                write_json(&out.path("cost_sweep.json"), "cost_sweep", &sweep)?;
            }
            Scenario::Experiment => {
                let ecfg = ExperimentConfig {
                    rows: cfg.experiment_rows,
                    seed: cfg.seed()?,
                    ..Default::default()
                };
                let data = simulate_experiment(&m, &ecfg)?;
                let rec = experimental_recovery(&data, ecfg.seed)?;
                let tv = total_variation(&rec.joint, &true_joint(&m, &data)?);
                #[derive(Serialize)]
                struct Exp<'a> {
                    total_variation: f64,
                    cells: &'a [String],
                    strata: &'a [String],
                    recovered: &'a [Vec<f64>],
                    skipped_arms: &'a [(f64, String)],
                    warnings: &'a [String],
                }
                write_json(
                    &out.path("experiment.json"),
                    "experiment",
                    &Exp {
                        total_variation: tv,
                        cells: &rec.cell_labels,
                        strata: &rec.stratum_labels,
                        recovered: &rec.joint,
                        skipped_arms: &rec.skipped_arms,
                        warnings: &rec.warnings,
                    },
                )?;
            }
        }
    }
    let refs: Vec<&ScenarioResult> = scenarios.iter().collect();
    write_scenario_csv(&refs, std::fs::File::create(out.path("scenarios.csv"))?)?;
    write_segment_csv(&refs, std::fs::File::create(out.path("segments.csv"))?)?;
    let mut bars = csv::Writer::from_path(out.path("welfare_bars.csv"))?;
    bars.write_record(["scheme", "measure", "value"])?;
    for s in &scenarios {
        for (k, v) in [
            ("profit", s.profit),
            ("consumer_welfare", s.consumer_welfare),
            ("social_welfare", s.social_welfare),
        ] {
            bars.write_record([s.label.as_str(), k, &cents(v)])?;
        }
    }
    bars.flush()?;
    write_json(
        &out.path("scenarios.json"),
        "counterfactuals",
        &CounterfactualReport {
            scenarios,
            ordering_chain: stamp,
            ic_gap: ic,
        },
    )?;
    Ok(())
}

/// Runs `stages` in order into `cfg.output_dir`. A missing input file is
/// reported before anything is written. After a failure the remaining
/// stages are skipped; the MANIFEST records every stage either way.
pub fn run_pipeline(cfg: &RunConfig, stages: &[Stage]) -> Result<Manifest> {
    cfg.validate()?;
    if stages.iter().any(|s| *s != Stage::Simulate) {
        let p = input_path(cfg)?;
        if !p.is_file() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("input file `{}` not found", p.display()),
            )));
        }
    }
    if let Some(f) = &cfg.fit {
        if !f.is_file() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("fit file `{}` not found", f.display()),
            )));
        }
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut ctx = Context::default();
    let mut manifest = Manifest {
        stages: stages.iter().map(|s| (*s, StageStatus::NotRun)).collect(),
    };
    let mut failure = None;
    for (i, &stage) in stages.iter().enumerate() {
        let mut out = Out {
            dir: &cfg.output_dir,
            files: Vec::new(),
        };
        match run_stage(stage, cfg, &mut ctx, &mut out) {
            Ok(()) => manifest.stages[i].1 = StageStatus::Completed(out.files),
            Err(e) => {
                manifest.stages[i].1 = StageStatus::Failed(e.to_string());
                failure = Some(e);
                break;
            }
        }
    }
    std::fs::write(cfg.output_dir.join("MANIFEST"), manifest.render())?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}
