//! Versioned JSON documents and long-format plot tables.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::BinEdges;
use crate::tariff::PriceSchedule;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub format_version: u32,
    pub kind: String,
    pub data: T,
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, data: &T) -> Result<()> {
    let doc = Document {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        data,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let doc: Document<T> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "{}: format version {} is not supported",
            path.display(),
            doc.format_version
        )));
    }
    if doc.kind != kind {
        return Err(Error::Config(format!(
            "{}: expected a `{kind}` document, found `{}`",
            path.display(),
            doc.kind
        )));
    }
    Ok(doc.data)
}

/// Dollar amounts in reports are rounded to cents.
pub fn cents(x: f64) -> String {
    format!("{:.2}", (x * 100.0).round() / 100.0)
}

/// A schedule to plot, optionally with a confidence band per bin.
#[derive(Debug, Clone)]
pub struct PlotSeries<'a> {
    pub scheme: &'a str,
    pub schedule: &'a PriceSchedule,
    pub band: Option<&'a [(f64, f64)]>,
}

/// Marginal price by size bin, one row per (scheme, bin):
/// `scheme,size,marginal_price,ci_lo,ci_hi`. Bands are left empty when
/// absent.
pub fn emit_plot_data<W: Write>(series: &[PlotSeries], bins: &BinEdges, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "size", "marginal_price", "ci_lo", "ci_hi"])?;
    for s in series {
        if let Some(b) = s.band {
            if b.len() != bins.len() {
                return Err(Error::Domain(format!("{} band entries for {} bins", b.len(), bins.len())));
            }
        }
        for k in 0..bins.len() {
            let q = bins.starts()[k].max(1) as f64;
            let price = s.schedule.marginal_price(q)?;
            let (lo, hi) = match s.band {
                Some(b) => (cents(b[k].0), cents(b[k].1)),
                None => (String::new(), String::new()),
            };
            w.write_record([s.scheme.to_string(), bins.label(k), cents(price), lo, hi])?;
        }
    }
    w.flush()?;
    Ok(())
}
