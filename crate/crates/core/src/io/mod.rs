//! Files in and out: deal tables, run configuration, versioned JSON
//! documents, plot tables and the staged pipeline behind the CLI.

mod config;
mod deals;
mod output;
mod pipeline;

pub use config::{Preset, RunConfig, Scenario};
pub use deals::{ingest_deals, read_deals, write_deals, write_deals_file, Ingested, DEAL_COLUMNS};
pub use output::{cents, emit_plot_data, read_json, write_json, Document, PlotSeries, FORMAT_VERSION};
pub use pipeline::{
    run_pipeline, ChainStamp, CounterfactualReport, IcGapSummary, IngestSummary, Manifest, Stage, StageStatus, Truth,
};
