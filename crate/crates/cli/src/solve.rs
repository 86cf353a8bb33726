use std::fs;
use std::path::PathBuf;

use ssqcqp_core::problems::{build, NavOptions, RegistryError};
use ssqcqp_core::{
    integrate_flow, solve, FlowError, SolveResult, SolveStatus, SolverConfig, SolverError,
    TraceRecord, Variant,
};

use crate::args::{Format, SolveArgs, VariantArg};
use crate::document::{
    write_json, write_trace_csv, FlowSummary, NavParams, ProblemHeader, ResultDocument,
};
use crate::error::CliError;

const DEFAULT_FLOW_H: f64 = 1e-3;
const DEFAULT_FLOW_T: f64 = 10.0;

/// Files written by a solve run.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub document: ResultDocument,
    pub result_path: PathBuf,
    pub trace_path: PathBuf,
}

impl SolveOutput {
    /// Failures that still produce artifacts are reported through the exit code.
    pub fn exit_code(&self) -> u8 {
        match self.document.status.as_str() {
            "subproblem_failure" => CliError::Subproblem(String::new()).exit_code(),
            "line_search_failure" => CliError::LineSearch.exit_code(),
            _ => 0,
        }
    }
}

/// Resolve every override on top of the defaults, rejecting flags that do not apply.
pub fn resolve_config(args: &SolveArgs) -> Result<SolverConfig, CliError> {
    if args.variant != VariantArg::ActiveSet && (args.delta.is_some() || args.q_percent.is_some())
    {
        return Err(CliError::Usage(
            "--delta and --q-percent apply only to --variant active-set".into(),
        ));
    }
    if args.variant != VariantArg::Flow && (args.flow_h.is_some() || args.flow_t.is_some()) {
        return Err(CliError::Usage(
            "--flow-h and --flow-T apply only to --variant flow".into(),
        ));
    }
    let d = SolverConfig::default();
    let cfg = SolverConfig {
        alpha: args.alpha.unwrap_or(d.alpha),
        gamma: args.gamma.unwrap_or(d.gamma),
        w_floor: args.w_floor.unwrap_or(d.w_floor),
        epsilon: args.epsilon.unwrap_or(d.epsilon),
        delta: args.delta.unwrap_or(d.delta),
        q_percent: args.q_percent.unwrap_or(d.q_percent),
        max_iter: args.max_iter.unwrap_or(d.max_iter),
        // the flow integrates a fixed vector field
        adaptive_w: args.variant != VariantArg::Flow,
        ..d
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::InfeasibleStart { .. } => CliError::InfeasibleStart(e.to_string()),
        SolverError::InvalidConfig(msg) => CliError::Usage(msg),
        SolverError::Direction(_) => CliError::Subproblem(e.to_string()),
        other => CliError::Internal(other.to_string()),
    }
}

fn flow_error(e: FlowError) -> CliError {
    match e {
        FlowError::InfeasibleStart { .. } => CliError::InfeasibleStart(e.to_string()),
        FlowError::Invalid(msg) => CliError::Usage(msg),
        FlowError::Direction(_) | FlowError::Subproblem { .. } => {
            CliError::Subproblem(e.to_string())
        }
        FlowError::FeasibilityBreach { .. } => CliError::FlowBreach(e.to_string()),
        FlowError::Problem(p) => CliError::Internal(p.to_string()),
    }
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::LineSearchFailure => "line_search_failure",
        SolveStatus::SubproblemFailure => "subproblem_failure",
    }
}

/// Run the requested variant in memory. Returns the document and, for the discrete variants,
/// the solver result it was built from.
pub fn run(args: &SolveArgs) -> Result<(ResultDocument, Option<SolveResult>), CliError> {
    let cfg = resolve_config(args)?;
    let nav = NavOptions {
        agents: args.agents,
        horizon: args.horizon,
        d_min: args.dmin,
    };
    let inst = build(&args.problem, &nav).map_err(|e| match e {
        RegistryError::Unknown(k) => CliError::UnknownProblem(k),
        RegistryError::Navigation(n) => CliError::Usage(n.to_string()),
    })?;
    let p = &inst.problem;
    let header = ProblemHeader {
        name: p.name().to_string(),
        key: args.problem.clone(),
        n: p.n(),
        m: p.m(),
        params: inst.navigation.as_ref().map(|_| NavParams {
            agents: args.agents,
            horizon: args.horizon,
            dmin: args.dmin,
        }),
    };

    let variant = match args.variant {
        VariantArg::Full => Variant::Full,
        VariantArg::ActiveSet => Variant::ActiveSet,
        VariantArg::QpBaseline => Variant::QpBaseline,
        VariantArg::Flow => {
            let h = args.flow_h.unwrap_or(DEFAULT_FLOW_H);
            let horizon = args.flow_t.unwrap_or(DEFAULT_FLOW_T);
            let tr = integrate_flow(p, &inst.x0, h, horizon, &cfg).map_err(flow_error)?;
            let x_final = tr.states.last().expect("at least one node").clone();
            let kkt = p
                .kkt_residual(&x_final, &tr.final_multipliers)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            let nodes = tr.times.len();
            let trace = (0..nodes)
                .map(|k| TraceRecord {
                    k,
                    f: tr.f_values[k],
                    max_g: tr.max_g[k],
                    u_norm_sq: tr.u_norm_sq[k],
                    step: tr.times.get(k + 1).map_or(0.0, |t| t - tr.times[k]),
                    active_count: p.m(),
                    halvings: 0,
                    wall_ns: 0,
                    subproblem_ns: 0,
                })
                .collect();
            let doc = ResultDocument {
                problem: header,
                variant: args.variant.name().into(),
                config: cfg,
                flow: Some(FlowSummary {
                    h,
                    horizon,
                    integral_half_u_sq: tr.integral_half_u_sq,
                    min_u_norm_sq: tr.min_u_norm_sq(),
                }),
                status: "completed".into(),
                f_final: *tr.f_values.last().unwrap(),
                x_final: x_final.iter().copied().collect(),
                kkt,
                trace,
            };
            return Ok((doc, None));
        }
    };

    let res = solve(p, &inst.x0, &cfg, variant).map_err(solver_error)?;
    let doc = ResultDocument {
        problem: header,
        variant: args.variant.name().into(),
        config: cfg,
        flow: None,
        status: status_name(res.status).into(),
        x_final: res.x_final.iter().copied().collect(),
        f_final: res.final_objective(),
        kkt: res.final_kkt,
        trace: res.trace.clone(),
    };
    Ok((doc, Some(res)))
}

/// Run and write `result.json` and `trace.csv` (or `trace.json`) under `args.out`.
pub fn cmd_solve(args: &SolveArgs) -> Result<SolveOutput, CliError> {
    let (document, _) = run(args)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let result_path = args.out.join("result.json");
    write_json(&result_path, &document)?;
    let trace_path = match args.format {
        Format::Csv => {
            let path = args.out.join("trace.csv");
            write_trace_csv(&path, &document.trace)?;
            path
        }
        Format::Json => {
            let path = args.out.join("trace.json");
            write_json(&path, &document.trace)?;
            path
        }
    };
    Ok(SolveOutput {
        document,
        result_path,
        trace_path,
    })
}
