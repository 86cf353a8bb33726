use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::str::FromStr;

use nalgebra::DVector;
use serde::Serialize;
use ssqcqp_core::problems::navigation::{pairwise_distances, NavigationParams};
use ssqcqp_core::TraceRecord;

use crate::args::{ExportArgs, Format};
use crate::document::{load, Loaded};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Objective,
    MaxG,
    MinUSqPrefix,
    ActiveCount,
    PairwiseDistances,
}

impl Series {
    pub fn name(self) -> &'static str {
        match self {
            Series::Objective => "objective",
            Series::MaxG => "max_g",
            Series::MinUSqPrefix => "min_u_sq_prefix",
            Series::ActiveCount => "active_count",
            Series::PairwiseDistances => "pairwise_distances",
        }
    }
}

impl FromStr for Series {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "objective" => Series::Objective,
            "max_g" => Series::MaxG,
            "min_u_sq_prefix" => Series::MinUSqPrefix,
            "active_count" => Series::ActiveCount,
            "pairwise_distances" => Series::PairwiseDistances,
            other => {
                return Err(CliError::BadInput(format!(
                    "unknown series `{other}` (expected objective, max_g, min_u_sq_prefix, \
                     active_count or pairwise_distances)"
                )))
            }
        })
    }
}

/// Running minimum, element by element.
pub fn prefix_min(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(f64::INFINITY, |m, &v| {
            *m = m.min(v);
            Some(*m)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCurve {
    pub agents: [usize; 2],
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SeriesData {
    /// One value per trace row.
    PerIteration { series: &'static str, k: Vec<usize>, values: Vec<f64> },
    /// One curve per agent pair over `t = 1..N`.
    Pairwise { series: &'static str, pairs: Vec<PairCurve> },
}

fn per_iteration(series: Series, trace: &[TraceRecord], f: impl Fn(&TraceRecord) -> f64) -> SeriesData {
    SeriesData::PerIteration {
        series: series.name(),
        k: trace.iter().map(|r| r.k).collect(),
        values: trace.iter().map(f).collect(),
    }
}

pub fn extract(loaded: &Loaded, series: Series) -> Result<SeriesData, CliError> {
    let trace = loaded.trace();
    Ok(match series {
        Series::Objective => per_iteration(series, trace, |r| r.f),
        Series::MaxG => per_iteration(series, trace, |r| r.max_g),
        Series::ActiveCount => per_iteration(series, trace, |r| r.active_count as f64),
        Series::MinUSqPrefix => {
            let u: Vec<f64> = trace.iter().map(|r| r.u_norm_sq).collect();
            SeriesData::PerIteration {
                series: series.name(),
                k: trace.iter().map(|r| r.k).collect(),
                values: prefix_min(&u),
            }
        }
        Series::PairwiseDistances => {
            let doc = match loaded {
                Loaded::Result(doc) => doc,
                Loaded::Trace(_) => {
                    return Err(CliError::BadInput(
                        "pairwise_distances needs a result.json with the final inputs".into(),
                    ))
                }
            };
            let nav = doc.problem.params.ok_or_else(|| {
                CliError::BadInput(format!(
                    "pairwise_distances needs a nav result, got `{}`",
                    doc.problem.key
                ))
            })?;
            let params = NavigationParams::standard(nav.agents, nav.horizon, nav.dmin)
                .map_err(|e| CliError::BadInput(e.to_string()))?;
            let u = DVector::from_column_slice(&doc.x_final);
            let curves = pairwise_distances(&params, &u)
                .map_err(|e| CliError::BadInput(e.to_string()))?;
            SeriesData::Pairwise {
                series: series.name(),
                pairs: curves
                    .into_iter()
                    .map(|c| PairCurve {
                        agents: [c.agents.0, c.agents.1],
                        distances: c.distances,
                    })
                    .collect(),
            }
        }
    })
}

/// Columnar CSV: `k,<series>` per iteration, or `t,d_i_j,...` for pairwise curves.
pub fn write_csv(data: &SeriesData, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match data {
        SeriesData::PerIteration { series, k, values } => {
            w.write_record(["k", series])?;
            for row in k.iter().zip(values) {
                w.serialize(row)?;
            }
        }
        SeriesData::Pairwise { pairs, .. } => {
            let mut header = vec!["t".to_string()];
            header.extend(pairs.iter().map(|p| format!("d_{}_{}", p.agents[0], p.agents[1])));
            w.write_record(&header)?;
            let len = pairs.first().map_or(0, |p| p.distances.len());
            for t in 0..len {
                let row: Vec<f64> = pairs.iter().map(|p| p.distances[t]).collect();
                w.serialize((t + 1, row))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_export(args: &ExportArgs) -> Result<SeriesData, CliError> {
    let series: Series = args.series.parse()?;
    let loaded = load(&args.input)?;
    let data = extract(&loaded, series)?;
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(File::create(path).map_err(|e| CliError::io(path, e))?),
        None => Box::new(io::stdout().lock()),
    };
    let target = args.out.clone().unwrap_or_else(|| "<stdout>".into());
    let mut sink = BufWriter::new(sink);
    match args.format {
        Format::Csv => write_csv(&data, &mut sink).map_err(|e| CliError::io(&target, e))?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut sink, &data).map_err(|e| CliError::io(&target, e))?;
            writeln!(sink).map_err(|e| CliError::io(&target, e))?;
        }
    }
    sink.flush().map_err(|e| CliError::io(&target, e))?;
    Ok(data)
}
