//! On-disk formats: the JSON result document and the trace table.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use ssqcqp_core::{KktResidual, SolverConfig, TraceRecord};

use crate::error::CliError;

/// Parameters that rebuild a navigation instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavParams {
    pub agents: usize,
    pub horizon: usize,
    pub dmin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemHeader {
    pub name: String,
    pub key: String,
    pub n: usize,
    pub m: usize,
    pub params: Option<NavParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub h: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub integral_half_u_sq: f64,
    pub min_u_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub problem: ProblemHeader,
    pub variant: String,
    pub config: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSummary>,
    pub status: String,
    pub x_final: Vec<f64>,
    pub f_final: f64,
    pub kkt: KktResidual,
    pub trace: Vec<TraceRecord>,
}

/// One row of the trace table, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    k: usize,
    f: f64,
    max_g: f64,
    u_norm_sq: f64,
    step: f64,
    active_count: usize,
    halvings: u32,
    wall_ns: u64,
}

pub const TRACE_COLUMNS: [&str; 8] = [
    "k",
    "f",
    "max_g",
    "u_norm_sq",
    "step",
    "active_count",
    "halvings",
    "wall_ns",
];

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for r in trace {
        w.serialize(CsvRow {
            k: r.k,
            f: r.f,
            max_g: r.max_g,
            u_norm_sq: r.u_norm_sq,
            step: r.step,
            active_count: r.active_count,
            halvings: r.halvings,
            wall_ns: r.wall_ns,
        })
        .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header = rdr.headers().map_err(|e| CliError::io(path, e))?;
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(CliError::BadInput(format!(
            "{}: expected columns {}",
            path.display(),
            TRACE_COLUMNS.join(",")
        )));
    }
    rdr.deserialize::<CsvRow>()
        .map(|row| {
            let r = row.map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))?;
            Ok(TraceRecord {
                k: r.k,
                f: r.f,
                max_g: r.max_g,
                u_norm_sq: r.u_norm_sq,
                step: r.step,
                active_count: r.active_count,
                halvings: r.halvings,
                wall_ns: r.wall_ns,
                subproblem_ns: 0,
            })
        })
        .collect()
}

/// What an export can read: a full result document or a bare trace.
pub enum Loaded {
    Result(Box<ResultDocument>),
    Trace(Vec<TraceRecord>),
}

impl Loaded {
    pub fn trace(&self) -> &[TraceRecord] {
        match self {
            Loaded::Result(doc) => &doc.trace,
            Loaded::Trace(t) => t,
        }
    }
}

/// Read `result.json`, `trace.json` or `trace.csv`, deciding by extension and content.
pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        return read_trace_csv(path).map(Loaded::Trace);
    }
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::BadInput(format!("{}: {e}", path.display()));
    if value.is_array() {
        serde_json::from_value(value).map(Loaded::Trace).map_err(bad)
    } else {
        serde_json::from_value(value)
            .map(|d| Loaded::Result(Box::new(d)))
            .map_err(bad)
    }
}
