//! Report documents, tables and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use uavflow::model::{Grid, TrafficForecast};
use uavflow::sim::{ComparisonReport, TraceSummary};
use uavflow::{ServiceClass, SolvedModel, Subgroup};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Hint for plotting tools: counts span several decades.
const Y_SCALE: &str = "log";

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    /// sha256 of the scenario file, when the command read or wrote one.
    pub scenario_digest: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub command: String,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        write_json(&path, self)?;
        Ok(path)
    }
}

/// What `simulate` leaves behind for `compare`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub scenario_digest: String,
    pub scenario_name: String,
    pub seed: u64,
    pub n_uavs: u64,
    pub duration_s: f64,
    pub trace: PathBuf,
    pub summary: TraceSummary,
}

#[derive(Debug, Serialize)]
pub struct ServiceTotals {
    pub service: ServiceClass,
    pub packets: f64,
    pub bytes: f64,
}

#[derive(Debug, Serialize)]
pub struct ForecastDocument<'a> {
    pub scenario_digest: &'a str,
    pub scenario_name: &'a str,
    pub n_uavs: u64,
    pub duration_s: f64,
    pub y_scale: &'static str,
    pub fractions: [f64; 3],
    pub shares: Grid,
    pub rates: Grid,
    pub services: Vec<ServiceTotals>,
    pub total_bytes: f64,
}

impl<'a> ForecastDocument<'a> {
    pub fn new(
        digest: &'a str,
        name: &'a str,
        model: &SolvedModel,
        f: &TrafficForecast,
    ) -> Self {
        Self {
            scenario_digest: digest,
            scenario_name: name,
            n_uavs: f.n_uavs,
            duration_s: f.duration_s,
            y_scale: Y_SCALE,
            fractions: model.partition.fractions,
            shares: model.shares.beta,
            rates: model.rates.lambda,
            services: ServiceClass::ALL
                .iter()
                .map(|&s| ServiceTotals {
                    service: s,
                    packets: f.packets[s.index()],
                    bytes: f.bytes[s.index()],
                })
                .collect(),
            total_bytes: f.total_bytes,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ComparisonDocument<'a> {
    pub scenario_digest: &'a str,
    pub seed: u64,
    pub y_scale: &'static str,
    #[serde(flatten)]
    pub report: &'a ComparisonReport,
}

impl<'a> ComparisonDocument<'a> {
    pub fn new(digest: &'a str, seed: u64, report: &'a ComparisonReport) -> Self {
        Self {
            scenario_digest: digest,
            seed,
            y_scale: Y_SCALE,
            report,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, to_json(value)).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn csv_string(rows: Vec<[String; 4]>, header: [&str; 4]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Long format: one row per (metric, service, subgroup) bar.
pub fn forecast_csv(model: &SolvedModel, f: &TrafficForecast) -> String {
    let mut rows = Vec::new();
    for g in Subgroup::ALL {
        rows.push(["fraction".into(), String::new(), g.to_string(), model.partition.get(g).to_string()]);
    }
    for (metric, grid) in [("share", &model.shares.beta), ("rate", &model.rates.lambda)] {
        for s in ServiceClass::ALL {
            for g in Subgroup::ALL {
                rows.push([
                    metric.into(),
                    s.to_string(),
                    g.to_string(),
                    grid[s.index()][g.index()].to_string(),
                ]);
            }
        }
    }
    for s in ServiceClass::ALL {
        rows.push(["packets".into(), s.to_string(), String::new(), f.packets[s.index()].to_string()]);
        rows.push(["bytes".into(), s.to_string(), String::new(), f.bytes[s.index()].to_string()]);
    }
    rows.push(["bytes".into(), "total".into(), String::new(), f.total_bytes.to_string()]);
    csv_string(rows, ["metric", "service", "subgroup", "value"])
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn comparison_csv(report: &ComparisonReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "service",
        "subgroup",
        "expected_packets",
        "observed_packets",
        "rel_err",
        "z",
        "expected_bytes",
        "observed_bytes",
    ])
    .expect("in-memory write");
    for s in &report.segments {
        w.write_record([
            s.service.to_string(),
            s.subgroup.to_string(),
            s.expected.to_string(),
            s.observed.to_string(),
            opt(s.rel_err),
            opt(s.z),
            String::new(),
            s.observed_bytes.to_string(),
        ])
        .expect("in-memory write");
    }
    for s in &report.services {
        w.write_record([
            s.service.to_string(),
            "all".into(),
            s.expected_packets.to_string(),
            s.observed_packets.to_string(),
            opt(s.packets_rel_err),
            String::new(),
            s.expected_bytes.to_string(),
            s.observed_bytes.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn summary_csv(summary: &TraceSummary) -> String {
    let mut rows = Vec::new();
    for s in ServiceClass::ALL {
        for g in Subgroup::ALL {
            rows.push([
                s.to_string(),
                g.to_string(),
                summary.count(s, g).to_string(),
                summary.bytes(s, g).to_string(),
            ]);
        }
    }
    csv_string(rows, ["service", "subgroup", "packets", "bytes"])
}

fn grid_table(out: &mut String, title: &str, grid: &Grid) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "  {:<10} {:>14} {:>14} {:>14}", "", "poor", "middle", "rich");
    for s in ServiceClass::ALL {
        let r = grid[s.index()];
        let _ = writeln!(out, "  {:<10} {:>14.6} {:>14.6} {:>14.6}", s.to_string(), r[0], r[1], r[2]);
    }
}

pub fn forecast_table(name: &str, model: &SolvedModel, f: &TrafficForecast) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {name}: {} UAVs over {} s\n", f.n_uavs, f.duration_s);
    let [p, m, r] = model.partition.fractions;
    let _ = writeln!(out, "subgroup fractions\n  poor {p:.6}  middle {m:.6}  rich {r:.6}\n");
    grid_table(&mut out, "transaction shares per service", &model.shares.beta);
    out.push('\n');
    grid_table(&mut out, "per-UAV rates, packets/s", &model.rates.lambda);
    out.push('\n');
    let _ = writeln!(out, "  {:<10} {:>16} {:>16}", "service", "packets", "bytes");
    for s in ServiceClass::ALL {
        let i = s.index();
        let _ = writeln!(out, "  {:<10} {:>16.6e} {:>16.6e}", s.to_string(), f.packets[i], f.bytes[i]);
    }
    let _ = writeln!(out, "  {:<10} {:>16} {:>16.6e}", "total", "", f.total_bytes);
    out
}

pub fn summary_table(summary: &TraceSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "  {:<10} {:<8} {:>12} {:>16}", "service", "subgroup", "packets", "bytes");
    for s in ServiceClass::ALL {
        for g in Subgroup::ALL {
            let _ = writeln!(
                out,
                "  {:<10} {:<8} {:>12} {:>16}",
                s.to_string(),
                g.to_string(),
                summary.count(s, g),
                summary.bytes(s, g)
            );
        }
    }
    let _ = writeln!(out, "  {:<19} {:>12} {:>16}", "total", summary.total_count, summary.total_bytes);
    out
}

fn fmt_opt(x: Option<f64>, prec: usize) -> String {
    x.map(|v| format!("{v:.prec$}")).unwrap_or_else(|| "-".into())
}

pub fn comparison_table(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "  {:<10} {:<8} {:>14} {:>12} {:>10} {:>8}",
        "service", "subgroup", "expected", "observed", "rel_err", "z"
    );
    for s in &report.segments {
        let _ = writeln!(
            out,
            "  {:<10} {:<8} {:>14.2} {:>12} {:>10} {:>8}{}",
            s.service.to_string(),
            s.subgroup.to_string(),
            s.expected,
            s.observed,
            fmt_opt(s.rel_err, 5),
            fmt_opt(s.z, 2),
            if s.outlier { "  outlier" } else { "" }
        );
    }
    out.push('\n');
    for s in &report.services {
        let _ = writeln!(
            out,
            "  {:<10} packets {:>14.2} vs {:>12} ({})  bytes {:>16.4e} vs {:>16} ({})",
            s.service.to_string(),
            s.expected_packets,
            s.observed_packets,
            fmt_opt(s.packets_rel_err, 5),
            s.expected_bytes,
            s.observed_bytes,
            fmt_opt(s.bytes_rel_err, 5),
        );
    }
    let _ = writeln!(out, "\n  {} outlier segment(s) beyond 4σ", report.outliers);
    out
}
