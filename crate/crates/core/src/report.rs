//! JSON and CSV serialization of [`FidelityReport`]s.
//!
//! Field order is fixed:
//!
//! | field          | JSON type           | notes                               |
//! |----------------|---------------------|-------------------------------------|
//! | `tensor_name`  | string              |                                     |
//! | `format_name`  | string              | canonical codec selector            |
//! | `granularity`  | string              | starts with per-channel / per-token |
//! | `sqnr_db`      | number or `"inf"`   | rounded to 4 decimals               |
//! | `max_abs_err`  | number              |                                     |
//! | `mean_abs_err` | number              |                                     |
//! | `rel_fro_err`  | number              | `‖x − x̂‖_F / ‖x‖_F`                |
//! | `config`       | object (sorted)     | CSV: `key=value` pairs joined by `;`|
//!
//! The CSV header is the field names above in the same order.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::FidelityReport;

pub const CSV_HEADER: [&str; 8] = [
    "tensor_name",
    "format_name",
    "granularity",
    "sqnr_db",
    "max_abs_err",
    "mean_abs_err",
    "rel_fro_err",
    "config",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::InvalidParameter(format!("unknown report format `{s}`"))),
        }
    }
}

impl ReportFormat {
    /// Guesses from a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Db {
    Finite(f64),
    Text(String),
}

fn round_db(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn db_to_wire(v: f64) -> Db {
    if v == f64::INFINITY {
        Db::Text("inf".into())
    } else {
        Db::Finite(round_db(v))
    }
}

fn db_from_wire(d: Db) -> Result<f64> {
    match d {
        Db::Finite(v) => Ok(v),
        Db::Text(s) if s == "inf" => Ok(f64::INFINITY),
        Db::Text(s) => Err(Error::Report(format!("bad sqnr_db value `{s}`"))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Wire {
    tensor_name: String,
    format_name: String,
    granularity: String,
    sqnr_db: Db,
    max_abs_err: f64,
    mean_abs_err: f64,
    rel_fro_err: f64,
    config: std::collections::BTreeMap<String, String>,
}

impl From<&FidelityReport> for Wire {
    fn from(r: &FidelityReport) -> Self {
        Wire {
            tensor_name: r.tensor_name.clone(),
            format_name: r.format_name.clone(),
            granularity: r.granularity.clone(),
            sqnr_db: db_to_wire(r.sqnr_db),
            max_abs_err: r.max_abs_err,
            mean_abs_err: r.mean_abs_err,
            rel_fro_err: r.rel_fro_err,
            config: r.config.clone(),
        }
    }
}

impl TryFrom<Wire> for FidelityReport {
    type Error = Error;

    fn try_from(w: Wire) -> Result<Self> {
        Ok(FidelityReport {
            tensor_name: w.tensor_name,
            format_name: w.format_name,
            granularity: w.granularity,
            sqnr_db: db_from_wire(w.sqnr_db)?,
            max_abs_err: w.max_abs_err,
            mean_abs_err: w.mean_abs_err,
            rel_fro_err: w.rel_fro_err,
            config: w.config,
        })
    }
}

pub fn render_json(reports: &[FidelityReport]) -> Result<String> {
    let wire: Vec<Wire> = reports.iter().map(Wire::from).collect();
    Ok(serde_json::to_string_pretty(&wire)?)
}

pub fn parse_json(s: &str) -> Result<Vec<FidelityReport>> {
    let wire: Vec<Wire> = serde_json::from_str(s)?;
    wire.into_iter().map(FidelityReport::try_from).collect()
}

fn format_db(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{:.4}", round_db(v))
    }
}

pub fn render_csv(reports: &[FidelityReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in reports {
        let config = r
            .config
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.tensor_name.clone(),
            r.format_name.clone(),
            r.granularity.clone(),
            format_db(r.sqnr_db),
            r.max_abs_err.to_string(),
            r.mean_abs_err.to_string(),
            r.rel_fro_err.to_string(),
            config,
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
}

pub fn render(reports: &[FidelityReport], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => render_json(reports),
        ReportFormat::Csv => render_csv(reports),
    }
}

pub fn emit_report(reports: &[FidelityReport], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render(reports, format)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn report(i: usize, sqnr_db: f64) -> FidelityReport {
        let mut config = BTreeMap::new();
        config.insert("k".into(), "32".into());
        config.insert("axis".into(), "0".into());
        FidelityReport {
            tensor_name: format!("t{i}"),
            format_name: "mxfp4".into(),
            granularity: "per-channel axis=0 (blocks of 32)".into(),
            sqnr_db,
            max_abs_err: 0.125,
            mean_abs_err: 0.01,
            rel_fro_err: 0.03,
            config,
        }
    }

    #[test]
    fn empty_json() {
        assert_eq!(render_json(&[]).unwrap(), "[]");
        assert!(parse_json("[]").unwrap().is_empty());
    }

    #[test]
    fn json_round_trip() {
        let rs = vec![report(0, 17.123_456_78), report(1, f64::INFINITY)];
        let s = render_json(&rs).unwrap();
        assert!(s.contains("\"inf\""));
        let back = parse_json(&s).unwrap();
        assert_eq!(back[0].sqnr_db, 17.1235);
        assert_eq!(back[1].sqnr_db, f64::INFINITY);
        assert_eq!(back[0].config, rs[0].config);
        assert_eq!(render_json(&back).unwrap(), s);
        // stable field order
        let keys: Vec<usize> = CSV_HEADER.iter().map(|k| s.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn csv_rows() {
        let rs: Vec<_> = (0..10).map(|i| report(i, i as f64)).collect();
        let s = render_csv(&rs).unwrap();
        assert_eq!(s.lines().count(), 11);
        assert_eq!(s.lines().next().unwrap(), CSV_HEADER.join(","));
        assert!(s.contains("axis=0;k=32"));
        let s = render_csv(&[report(0, f64::INFINITY)]).unwrap();
        assert!(s.lines().nth(1).unwrap().contains(",inf,"));
    }

    #[test]
    fn format_from_path() {
        assert_eq!(ReportFormat::from_path(Path::new("a.CSV")), ReportFormat::Csv);
        assert_eq!(ReportFormat::from_path(Path::new("a.json")), ReportFormat::Json);
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
