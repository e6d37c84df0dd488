//! Report rows, aggregates and byte-stable CSV/JSON serialization.
//!
//! CSV schema: `experiment,N,n,trial,metric_name,value` with full
//! double-precision values (shortest round-trip formatting, `.` decimal
//! separator). The JSON document mirrors rows and aggregates plus the config
//! echo; the wall-clock runtime is kept out of the serialized bytes so that
//! reruns of the same config are byte-identical.

use super::ExperimentConfig;
use crate::doa::PseudoSpectrum;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    #[serde(rename = "N")]
    pub n_dim: usize,
    #[serde(rename = "n")]
    pub n_samples: usize,
    pub trial: usize,
    pub metric_name: String,
    pub value: f64,
}

/// Median and 5/95 percentiles of one metric at one dimension pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
}

/// Output format for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<Row>,
    /// Keyed by `metric[N=...,n=...]` in sorted order.
    pub aggregates: BTreeMap<String, Aggregate>,
    pub config_echo: ExperimentConfig,
    /// Wall-clock seconds; excluded from serialized output and equality.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl PartialEq for ExperimentReport {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.aggregates == other.aggregates
            && self.config_echo == other.config_echo
    }
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Groups rows by `(metric, N, n)` and computes the aggregates exactly.
pub fn aggregate_rows(rows: &[Row]) -> BTreeMap<String, Aggregate> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in rows {
        let key = format!("{}[N={},n={}]", row.metric_name, row.n_dim, row.n_samples);
        groups.entry(key).or_default().push(row.value);
    }
    groups
        .into_iter()
        .map(|(key, mut values)| {
            values.sort_by(f64::total_cmp);
            let agg = Aggregate {
                median: quantile(&values, 0.5),
                p05: quantile(&values, 0.05),
                p95: quantile(&values, 0.95),
            };
            (key, agg)
        })
        .collect()
}

pub fn render_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("experiment,N,n,trial,metric_name,value\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.experiment, row.n_dim, row.n_samples, row.trial, row.metric_name, row.value
        );
    }
    out
}

pub fn render_json(report: &ExperimentReport) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("report serializes");
    out.push('\n');
    out
}

pub fn parse_report_json(text: &str) -> Result<ExperimentReport, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn emit_report<P: AsRef<Path>>(
    report: &ExperimentReport,
    path: P,
    format: ReportFormat,
) -> std::io::Result<()> {
    let bytes = match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => render_json(report),
    };
    std::fs::write(path, bytes)
}

/// Pseudo-spectrum CSV: `theta_deg,value,kind`, one row per grid angle.
pub fn render_spectrum_csv(ps: &PseudoSpectrum) -> String {
    let mut out = String::from("theta_deg,value,kind\n");
    for (theta, value) in ps.grid.iter().zip(&ps.values) {
        let _ = writeln!(out, "{},{},{}", theta.to_degrees(), value, ps.kind.as_str());
    }
    out
}

pub fn write_spectrum_csv<P: AsRef<Path>>(ps: &PseudoSpectrum, path: P) -> std::io::Result<()> {
    std::fs::write(path, render_spectrum_csv(ps))
}
