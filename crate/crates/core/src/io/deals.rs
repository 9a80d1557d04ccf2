//! Deal files: one row per potential deal with the fixed columns
//! `id,year,size,success,unit_price,snc` followed by covariate columns.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::market::CustomerRecord;

pub const DEAL_COLUMNS: [&str; 6] = ["id", "year", "size", "success", "unit_price", "snc"];

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub records: Vec<CustomerRecord>,
    /// Covariate columns kept, in file order.
    pub covariates: Vec<String>,
    /// Extra columns dropped because they are not known covariates.
    pub ignored_columns: Vec<String>,
}

fn parse_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

/// Reads deals from a file. With `known` set, only those covariates are
/// kept and every other extra column is reported and ignored.
pub fn ingest_deals(path: &Path, known: Option<&[String]>) -> Result<Ingested> {
    let file = std::fs::File::open(path)?;
    read_deals(file, known)
}

pub fn read_deals<R: Read>(input: R, known: Option<&[String]>) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut at = BTreeMap::new();
    for (i, h) in header.iter().enumerate() {
        if at.insert(h.as_str(), i).is_some() {
            return Err(parse_err(1, h, "duplicate column"));
        }
    }
    let mut fixed = [0usize; 6];
    for (slot, name) in fixed.iter_mut().zip(DEAL_COLUMNS) {
        *slot = *at.get(name).ok_or_else(|| parse_err(1, name, "required column missing"))?;
    }
    let mut covariates = Vec::new();
    let mut ignored_columns = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if fixed.contains(&i) {
            continue;
        }
        match known {
            Some(k) if !k.contains(h) => ignored_columns.push(h.clone()),
            _ => covariates.push((h.clone(), i)),
        }
    }
    if !ignored_columns.is_empty() {
        warn!("ignoring unknown columns: {}", ignored_columns.join(", "));
    }

    let mut records = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row_no = n + 2;
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let num = |col: usize| -> Result<f64> {
            let name = DEAL_COLUMNS[col];
            let s = field(fixed[col]);
            let v: f64 = s.parse().map_err(|_| parse_err(row_no, name, format!("not a number: `{s}`")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(parse_err(row_no, name, format!("must be a nonnegative number, got `{s}`")));
            }
            Ok(v)
        };
        let id = field(fixed[0]).to_string();
        if id.is_empty() {
            return Err(parse_err(row_no, "id", "empty id"));
        }
        let year: i32 = field(fixed[1])
            .parse()
            .map_err(|_| parse_err(row_no, "year", format!("not a year: `{}`", field(fixed[1]))))?;
        let size: u32 = field(fixed[2])
            .parse()
            .map_err(|_| parse_err(row_no, "size", format!("not a whole number: `{}`", field(fixed[2]))))?;
        if size == 0 {
            return Err(parse_err(row_no, "size", "size must be at least 1"));
        }
        let success = parse_bool(field(fixed[3]))
            .ok_or_else(|| parse_err(row_no, "success", format!("expected 0/1, got `{}`", field(fixed[3]))))?;
        let observed_unit_price = num(4)?;
        let snc_value = num(5)?;
        let mut cov = BTreeMap::new();
        for (name, i) in &covariates {
            let s = field(*i);
            if s.is_empty() {
                continue;
            }
            let v: f64 = s.parse().map_err(|_| parse_err(row_no, name, format!("not a number: `{s}`")))?;
            if !v.is_finite() {
                return Err(parse_err(row_no, name, "must be finite"));
            }
            cov.insert(name.clone(), v);
        }
        records.push(CustomerRecord {
            id,
            year,
            covariates: cov,
            size,
            success,
            observed_unit_price,
            snc_value,
        });
    }
    Ok(Ingested {
        records,
        covariates: covariates.into_iter().map(|(n, _)| n).collect(),
        ignored_columns,
    })
}

/// Writes deals with every covariate any record carries, sorted by name.
/// Numbers use the shortest representation that reads back exactly.
pub fn write_deals<W: Write>(records: &[CustomerRecord], out: W) -> Result<()> {
    let names: BTreeSet<&String> = records.iter().flat_map(|r| r.covariates.keys()).collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = DEAL_COLUMNS.to_vec();
    header.extend(names.iter().map(|s| s.as_str()));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.id.clone(),
            r.year.to_string(),
            r.size.to_string(),
            if r.success { "1" } else { "0" }.to_string(),
            r.observed_unit_price.to_string(),
            r.snc_value.to_string(),
        ];
        row.extend(names.iter().map(|n| r.covariates.get(*n).map(f64::to_string).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_deals_file(records: &[CustomerRecord], path: &Path) -> Result<()> {
    write_deals(records, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{generate_synthetic_market, GeneratorSpec};

    const GOOD: &str = "id,year,size,success,unit_price,snc,x\n\
        a,2020,3,1,2500,1868,0.5\n\
        b,2021,40,0,2100.5,4670,-1\n\
        c,2021,1,true,0,0,2\n";

    #[test]
    fn reads_well_formed_rows() {
        let d = read_deals(GOOD.as_bytes(), None).unwrap();
        assert_eq!(d.records.len(), 3);
        assert_eq!(d.covariates, vec!["x"]);
        assert_eq!(d.records[1].observed_unit_price, 2100.5);
        assert!(!d.records[1].success && d.records[2].success);
        assert_eq!(d.records[0].covariates["x"], 0.5);
    }

    #[test]
    fn rejects_zero_size_with_location() {
        let bad = GOOD.replace("b,2021,40", "b,2021,0");
        match read_deals(bad.as_bytes(), None) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "size");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reports_bad_numbers_and_missing_columns() {
        let bad = GOOD.replace("2100.5", "lots");
        assert!(matches!(read_deals(bad.as_bytes(), None), Err(Error::Parse { row: 3, ref column, .. }) if column == "unit_price"));
        let bad = GOOD.replace("0.5", "abc");
        assert!(matches!(read_deals(bad.as_bytes(), None), Err(Error::Parse { row: 2, ref column, .. }) if column == "x"));
        let no_snc = "id,year,size,success,unit_price\na,2020,1,1,3\n";
        assert!(matches!(read_deals(no_snc.as_bytes(), None), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn unknown_columns_are_ignored() {
        let d = read_deals(GOOD.as_bytes(), Some(&[])).unwrap();
        assert_eq!(d.ignored_columns, vec!["x"]);
        assert!(d.records.iter().all(|r| r.covariates.is_empty()));
    }

    #[test]
    fn generator_output_round_trips() {
        let m = generate_synthetic_market(&GeneratorSpec::reference(300), 5).unwrap().market;
        let mut buf = Vec::new();
        write_deals(&m.customers, &mut buf).unwrap();
        let back = read_deals(buf.as_slice(), None).unwrap();
        assert_eq!(back.records, m.customers);
    }
}
