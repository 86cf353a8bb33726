use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ssqcqp", version, about = "Feasible-descent solver runs and trace export")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a registered problem and write result.json plus a trace table.
    Solve(SolveArgs),
    /// Extract one plot-ready series from a result or trace file.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Full,
    ActiveSet,
    Flow,
    QpBaseline,
}

impl VariantArg {
    pub fn name(self) -> &'static str {
        match self {
            VariantArg::Full => "full",
            VariantArg::ActiveSet => "active-set",
            VariantArg::Flow => "flow",
            VariantArg::QpBaseline => "qp-baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// ball-linear, box-qp, rosenbrock-ball or nav
    #[arg(long)]
    pub problem: String,
    #[arg(long, value_enum, default_value_t = VariantArg::Full)]
    pub variant: VariantArg,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "w-floor")]
    pub w_floor: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Active-set variant only.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Active-set variant only.
    #[arg(long = "q-percent")]
    pub q_percent: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub agents: usize,
    #[arg(long, default_value_t = 40)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0.25)]
    pub dmin: f64,
    /// Flow variant only; Euler step (default 1e-3).
    #[arg(long = "flow-h")]
    pub flow_h: Option<f64>,
    /// Flow variant only; integration horizon (default 10).
    #[arg(long = "flow-T")]
    pub flow_t: Option<f64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Format of the trace table written next to result.json.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// result.json, trace.json or trace.csv
    #[arg(long)]
    pub input: PathBuf,
    /// objective, max_g, min_u_sq_prefix, active_count or pairwise_distances
    #[arg(long)]
    pub series: String,
    /// Destination file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}
