//! Outer iterations: direction subproblem, stopping test, safeguarded line search, weight
//! update. The full variant enforces every constraint in the subproblem; the active-set variant
//! keeps only `A_δ(x) ∪ T_q(x)` there but still line-searches against all of them.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::direction::{
    solve_direction, solve_direction_qp, DirectionError, DirectionRequest, DirectionSolution,
    DirectionStatus, SubproblemTolerances,
};
use crate::linesearch::{backtrack, BacktrackParams};
use crate::problem::{max_entry, KktResidual, Point, ProblemDef, ProblemError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("initial point is infeasible (max constraint value {max_violation:e})")]
    InfeasibleStart { max_violation: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Direction(#[from] DirectionError),
    #[error("weight update needs distinct points")]
    ZeroDisplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Lower bound `w̲` on every weight, and their initial value.
    pub w_floor: f64,
    /// Stop when `||u||₂ <= epsilon`.
    pub epsilon: f64,
    pub delta: f64,
    pub q_percent: f64,
    /// Maximum number of accepted steps.
    pub max_iter: usize,
    pub max_halvings: u32,
    pub feas_tol: f64,
    pub adaptive_w: bool,
    pub tol_sub: f64,
    pub tol_kkt: f64,
    /// How many times all weights are doubled after a failed subproblem before giving up.
    pub max_weight_doublings: u32,
    /// Keep a copy of the weight vector at every iteration in [`SolveResult::weight_history`].
    pub record_weights: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 0.1,
            w_floor: 1e-3,
            epsilon: 1e-5,
            delta: 0.5,
            q_percent: 5.0,
            max_iter: 1000,
            max_halvings: 60,
            feas_tol: 0.0,
            adaptive_w: true,
            tol_sub: 1e-9,
            tol_kkt: 1e-6,
            max_weight_doublings: 3,
            record_weights: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::InvalidConfig(msg.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.w_floor > 0.0 && self.w_floor.is_finite()) {
            return bad("w_floor must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if !(0.0..=100.0).contains(&self.q_percent) {
            return bad("q_percent must lie in [0, 100]");
        }
        if !(self.feas_tol >= 0.0) {
            return bad("feas_tol must be nonnegative");
        }
        if !(self.tol_sub > 0.0 && self.tol_kkt > 0.0) {
            return bad("subproblem tolerances must be positive");
        }
        Ok(())
    }

    pub fn tolerances(&self) -> SubproblemTolerances {
        SubproblemTolerances {
            tol_sub: self.tol_sub,
            tol_kkt: self.tol_kkt,
        }
    }

    fn backtrack_params(&self) -> BacktrackParams {
        BacktrackParams {
            gamma: self.gamma,
            max_halvings: self.max_halvings,
            feas_tol: self.feas_tol,
        }
    }
}

/// Which direction subproblem the outer loop uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Every constraint in the QCQP.
    Full,
    /// QCQP over `A_δ(x) ∪ T_q(x)`.
    ActiveSet,
    /// Linearized QP without the curvature term.
    QpBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LineSearchFailure,
    SubproblemFailure,
}

/// Diagnostics for one iterate `x⁽ᵏ⁾`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub f: f64,
    pub max_g: f64,
    pub u_norm_sq: f64,
    /// Accepted step `t⁽ᵏ⁾`; zero on the terminating record.
    pub step: f64,
    pub active_count: usize,
    pub halvings: u32,
    pub wall_ns: u64,
    /// Portion of `wall_ns` spent in the conic solver.
    #[serde(default)]
    pub subproblem_ns: u64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x_final: Point,
    pub status: SolveStatus,
    pub trace: Vec<TraceRecord>,
    /// Subproblem multipliers at `x_final`, zero outside the active set.
    pub multipliers: DVector<f64>,
    pub final_kkt: KktResidual,
    pub weights: DVector<f64>,
    pub weight_history: Vec<DVector<f64>>,
}

impl SolveResult {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map(|r| r.f).unwrap_or(f64::NAN)
    }

    pub fn total_subproblem_ns(&self) -> u64 {
        self.trace.iter().map(|r| r.subproblem_ns).sum()
    }
}

/// `A_δ ∪ T_q`: every index with `g_i >= -δ`, plus the `⌈q·m/100⌉` largest values (ties go to
/// the lower index). Returned in increasing order.
pub fn select_active_set(g_values: &DVector<f64>, delta: f64, q_percent: f64) -> Vec<usize> {
    let m = g_values.len();
    let mut chosen = vec![false; m];
    for (i, &g) in g_values.iter().enumerate() {
        if g >= -delta {
            chosen[i] = true;
        }
    }
    let top = ((q_percent * m as f64 / 100.0) - 1e-9).ceil().max(0.0) as usize;
    if top > 0 {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| g_values[b].total_cmp(&g_values[a]).then(a.cmp(&b)));
        for &i in order.iter().take(top.min(m)) {
            chosen[i] = true;
        }
    }
    (0..m).filter(|&i| chosen[i]).collect()
}

/// `w_i' = max{w_i, ||∇g_i(x_next) - ∇g_i(x_prev)|| / (2 ||x_next - x_prev||)}`.
pub fn update_w(
    w: &DVector<f64>,
    x_prev: &DVector<f64>,
    x_next: &DVector<f64>,
    grads_prev: &DMatrix<f64>,
    grads_next: &DMatrix<f64>,
) -> Result<DVector<f64>, SolverError> {
    let dist = (x_next - x_prev).norm();
    if dist == 0.0 {
        return Err(SolverError::ZeroDisplacement);
    }
    let mut out = w.clone();
    for i in 0..w.len() {
        let diff = (grads_next.row(i) - grads_prev.row(i)).norm();
        out[i] = out[i].max(diff / (2.0 * dist));
    }
    Ok(out)
}

/// Safe sequential QCQP with every constraint in the subproblem.
pub fn ss_qcqp(p: &ProblemDef, x0: &Point, cfg: &SolverConfig) -> Result<SolveResult, SolverError> {
    solve(p, x0, cfg, Variant::Full)
}

/// Safe sequential QCQP with the reduced subproblem over `A_δ(x) ∪ T_q(x)`.
pub fn ss_qcqp_as(
    p: &ProblemDef,
    x0: &Point,
    cfg: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    solve(p, x0, cfg, Variant::ActiveSet)
}

/// Same outer loop driven by the linearized QP direction. It can stall on the boundary because
/// that direction may be tangent there.
pub fn ss_qp_baseline(
    p: &ProblemDef,
    x0: &Point,
    cfg: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    solve(p, x0, cfg, Variant::QpBaseline)
}

struct Iterate {
    x: DVector<f64>,
    f: f64,
    grad_f: DVector<f64>,
    g: DVector<f64>,
    /// Full Jacobian when it was needed at this point.
    jac: Option<DMatrix<f64>>,
}

/// Subproblem with the weight-doubling fallback. Returns the last attempt and whether it
/// succeeded; `w` keeps any doublings.
fn direction_with_fallback(
    p: &ProblemDef,
    it: &Iterate,
    active: &[usize],
    w: &mut DVector<f64>,
    cfg: &SolverConfig,
    variant: Variant,
) -> Result<DirectionSolution, SolverError> {
    let g_gradients = match &it.jac {
        Some(jac) if active.len() == p.m() => jac.clone(),
        Some(jac) => jac.select_rows(active),
        None => p.constraint_gradients(&it.x, active)?,
    };
    let g_values = DVector::from_iterator(active.len(), active.iter().map(|&i| it.g[i]));
    let mut total_ns = 0;
    let mut attempt = 0;
    loop {
        let req = DirectionRequest {
            grad_f: it.grad_f.clone(),
            g_values: g_values.clone(),
            g_gradients: g_gradients.clone(),
            active: active.to_vec(),
            alpha: cfg.alpha,
            weights: DVector::from_iterator(active.len(), active.iter().map(|&i| w[i])),
        };
        let mut sol = match variant {
            Variant::QpBaseline => solve_direction_qp(&req, cfg.tolerances())?,
            _ => solve_direction(&req, cfg.tolerances())?,
        };
        total_ns += sol.solve_ns;
        sol.solve_ns = total_ns;
        if sol.status == DirectionStatus::Optimal || attempt >= cfg.max_weight_doublings {
            return Ok(sol);
        }
        attempt += 1;
        *w *= 2.0;
    }
}

fn evaluate(p: &ProblemDef, x: DVector<f64>, with_jac: bool) -> Result<Iterate, SolverError> {
    let (f, grad_f) = p.eval_objective(&x)?;
    let g = p.constraint_values(&x)?;
    let jac = if with_jac {
        Some(p.constraint_gradients(&x, &p.all_indices())?)
    } else {
        None
    };
    Ok(Iterate { x, f, grad_f, g, jac })
}

/// Shared driver for all variants.
pub fn solve(
    p: &ProblemDef,
    x0: &Point,
    cfg: &SolverConfig,
    variant: Variant,
) -> Result<SolveResult, SolverError> {
    cfg.validate()?;
    if x0.len() != p.n() {
        return Err(ProblemError::DimensionMismatch {
            expected: p.n(),
            actual: x0.len(),
        }
        .into());
    }
    let m = p.m();
    // The full Jacobian is needed at every point for the full subproblem, and for the weight
    // update in any variant.
    let need_full_jac = cfg.adaptive_w || variant != Variant::ActiveSet;
    let mut it = evaluate(p, x0.coords().clone(), need_full_jac)?;
    let start_violation = max_entry(&it.g);
    if start_violation > cfg.feas_tol {
        return Err(SolverError::InfeasibleStart {
            max_violation: start_violation,
        });
    }

    let all: Vec<usize> = p.all_indices();
    let mut w = DVector::from_element(m, cfg.w_floor);
    let mut trace = Vec::new();
    let mut weight_history = Vec::new();
    let mut multipliers = DVector::zeros(m);
    let line_search = cfg.backtrack_params();

    let status = 'outer: loop {
        let k = trace.len();
        let started = Instant::now();
        if cfg.record_weights {
            weight_history.push(w.clone());
        }
        let active = match variant {
            Variant::ActiveSet => select_active_set(&it.g, cfg.delta, cfg.q_percent),
            _ => all.clone(),
        };
        let sol = direction_with_fallback(p, &it, &active, &mut w, cfg, variant)?;
        multipliers.fill(0.0);
        for (j, &i) in active.iter().enumerate() {
            if let Some(&l) = sol.multipliers.get(j) {
                multipliers[i] = l;
            }
        }
        let u_norm_sq = sol.u.norm_squared();
        let mut record = TraceRecord {
            k,
            f: it.f,
            max_g: max_entry(&it.g),
            u_norm_sq,
            step: 0.0,
            active_count: active.len(),
            halvings: 0,
            wall_ns: 0,
            subproblem_ns: sol.solve_ns,
        };
        let finish = |mut record: TraceRecord, trace: &mut Vec<TraceRecord>| {
            record.wall_ns = started.elapsed().as_nanos() as u64;
            trace.push(record);
        };

        if sol.status != DirectionStatus::Optimal {
            finish(record, &mut trace);
            break 'outer SolveStatus::SubproblemFailure;
        }
        if u_norm_sq.sqrt() <= cfg.epsilon {
            finish(record, &mut trace);
            break 'outer SolveStatus::Converged;
        }
        if k >= cfg.max_iter {
            finish(record, &mut trace);
            break 'outer SolveStatus::MaxIter;
        }

        let step = backtrack(p, &it.x, it.f, &it.grad_f, &sol.u, &line_search)?;
        record.halvings = step.halvings;
        if !step.accepted {
            finish(record, &mut trace);
            break 'outer SolveStatus::LineSearchFailure;
        }
        record.step = step.t;

        let (f_next, grad_next) = p.eval_objective(&step.trial)?;
        let jac_next = if need_full_jac {
            Some(p.constraint_gradients(&step.trial, &all)?)
        } else {
            None
        };
        if cfg.adaptive_w {
            if let (Some(prev), Some(next)) = (&it.jac, &jac_next) {
                // a zero displacement cannot happen after an accepted step with u != 0
                if let Ok(updated) = update_w(&w, &it.x, &step.trial, prev, next) {
                    w = updated;
                }
            }
        }
        it = Iterate {
            x: step.trial,
            f: f_next,
            grad_f: grad_next,
            g: step.g_trial,
            jac: jac_next,
        };
        finish(record, &mut trace);
    };

    let x_final = Point::new(it.x)?;
    let final_kkt = p.kkt_residual(&x_final, &multipliers)?;
    Ok(SolveResult {
        x_final,
        status,
        trace,
        multipliers,
        final_kkt,
        weights: w,
        weight_history,
    })
}
