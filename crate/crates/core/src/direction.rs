//! Search-direction subproblems.
//!
//! The safe direction at `x` solves
//!
//! ```text
//!     minimize    1/2 ||u + ∇f(x)||²
//!     subject to  ∇g_i(x)'u + α g_i(x) + w_i ||u||² <= 0,   i ∈ A
//! ```
//!
//! which is solved through its epigraph form
//!
//! ```text
//!     minimize    1/2 ||u + ∇f(x)||²
//!     subject to  ∇g_i(x)'u + w_i s <= -α g_i(x),           i ∈ A
//!                 ||u||² <= s
//! ```
//!
//! with `||u||² <= s` written as the standard second-order cone
//! `||(u, (s-1)/2)||₂ <= (s+1)/2`. The baseline direction drops the quadratic terms and solves
//! the plain QP `∇g_i'u <= -α g_i`.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DirectionError {
    #[error("direction request has inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("direction request contains non-finite data")]
    NonFinite,
    #[error("invalid direction parameter: {0}")]
    Invalid(String),
    #[error("conic solver rejected the program: {0}")]
    Setup(String),
}

/// Data for one direction subproblem, restricted to the constraint subset `active`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionRequest {
    pub grad_f: DVector<f64>,
    pub g_values: DVector<f64>,
    /// One row per entry of `active`.
    pub g_gradients: DMatrix<f64>,
    pub active: Vec<usize>,
    pub alpha: f64,
    pub weights: DVector<f64>,
}

impl DirectionRequest {
    pub fn n(&self) -> usize {
        self.grad_f.len()
    }

    pub fn rows(&self) -> usize {
        self.active.len()
    }

    pub fn validate(&self) -> Result<(), DirectionError> {
        let (k, n) = (self.rows(), self.n());
        if self.g_values.len() != k || self.weights.len() != k || self.g_gradients.nrows() != k {
            return Err(DirectionError::Dimension(format!(
                "{} active indices, {} values, {} weights, {} gradient rows",
                k,
                self.g_values.len(),
                self.weights.len(),
                self.g_gradients.nrows()
            )));
        }
        if self.g_gradients.ncols() != n {
            return Err(DirectionError::Dimension(format!(
                "gradient rows have {} columns, expected {}",
                self.g_gradients.ncols(),
                n
            )));
        }
        let finite = self.grad_f.iter().all(|v| v.is_finite())
            && self.g_values.iter().all(|v| v.is_finite())
            && self.g_gradients.iter().all(|v| v.is_finite())
            && self.weights.iter().all(|v| v.is_finite())
            && self.alpha.is_finite();
        if !finite {
            return Err(DirectionError::NonFinite);
        }
        if !(self.alpha > 0.0) {
            return Err(DirectionError::Invalid("alpha must be positive".into()));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(DirectionError::Invalid("weights must be positive".into()));
        }
        Ok(())
    }

    /// `c_i(u) = ∇g_i'u + α g_i + scale·w_i ||u||²` for every row.
    fn constraint_residuals(&self, u: &DVector<f64>, weight_scale: f64) -> DVector<f64> {
        let unorm2 = u.norm_squared();
        let mut c = &self.g_gradients * u + self.alpha * &self.g_values;
        for (ci, &w) in c.iter_mut().zip(self.weights.iter()) {
            *ci += weight_scale * w * unorm2;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionStatus {
    Optimal,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSolution {
    pub u: DVector<f64>,
    /// Epigraph variable; at least `||u||²` up to solver tolerance.
    pub s: f64,
    /// One multiplier per active row.
    pub multipliers: DVector<f64>,
    /// `1/2 ||u + ∇f||²`
    pub objective: f64,
    pub status: DirectionStatus,
    /// Wall time spent inside the conic solver, all attempts included.
    pub solve_ns: u64,
}

/// Solver tolerances for a direction subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubproblemTolerances {
    /// Primal/dual feasibility and gap tolerance handed to the conic solver.
    pub tol_sub: f64,
    /// Acceptance threshold for [`verify_direction_kkt`].
    pub tol_kkt: f64,
}

impl Default for SubproblemTolerances {
    fn default() -> Self {
        Self {
            tol_sub: 1e-9,
            tol_kkt: 1e-6,
        }
    }
}

/// Conic data in the `min 1/2 z'Pz + q'z  s.t.  Az + slack = b, slack ∈ K` convention, with
/// `z = (u, s)` for the epigraph program and `z = u` for the baseline QP.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub p: CscMatrix<f64>,
    pub q: Vec<f64>,
    pub a: CscMatrix<f64>,
    pub b: Vec<f64>,
    pub cones: Vec<SupportedConeT<f64>>,
    /// Number of nonnegative-orthant rows, which come first in `a`.
    pub linear_rows: usize,
    /// Dimension of the trailing second-order cone, or 0 when there is none.
    pub cone_dim: usize,
    n_u: usize,
}

impl ConicProgram {
    pub fn num_variables(&self) -> usize {
        self.q.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }
}

/// Column-major triplet collector for building `CscMatrix` values.
struct CscBuilder {
    nrows: usize,
    columns: Vec<Vec<(usize, f64)>>,
}

impl CscBuilder {
    fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            columns: vec![Vec::new(); ncols],
        }
    }

    fn push(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.columns[col].push((row, value));
        }
    }

    fn build(self) -> CscMatrix<f64> {
        let mut colptr = Vec::with_capacity(self.columns.len() + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for mut col in self.columns {
            col.sort_by_key(|&(r, _)| r);
            for (r, v) in col {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        CscMatrix::new(self.nrows, colptr.len() - 1, colptr, rowval, nzval)
    }
}

/// Epigraph/second-order-cone form of the direction QCQP.
pub fn to_conic_form(req: &DirectionRequest) -> Result<ConicProgram, DirectionError> {
    req.validate()?;
    let n = req.n();
    let k = req.rows();
    let nvar = n + 1;
    let s_col = n;

    let mut p = CscBuilder::new(nvar, nvar);
    for j in 0..n {
        p.push(j, j, 1.0);
    }
    let mut q: Vec<f64> = req.grad_f.iter().copied().collect();
    q.push(0.0);

    let cone_dim = n + 2;
    let mut a = CscBuilder::new(k + cone_dim, nvar);
    let mut b = Vec::with_capacity(k + cone_dim);
    for r in 0..k {
        for j in 0..n {
            a.push(r, j, req.g_gradients[(r, j)]);
        }
        a.push(r, s_col, req.weights[r]);
        b.push(-req.alpha * req.g_values[r]);
    }
    // slack = b - A z = ((s+1)/2, u, (s-1)/2)
    let top = k;
    a.push(top, s_col, -0.5);
    b.push(0.5);
    for j in 0..n {
        a.push(top + 1 + j, j, -1.0);
        b.push(0.0);
    }
    a.push(top + 1 + n, s_col, -0.5);
    b.push(-0.5);

    let mut cones = Vec::with_capacity(2);
    if k > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(k));
    }
    cones.push(SupportedConeT::SecondOrderConeT(cone_dim));

    Ok(ConicProgram {
        p: p.build(),
        q,
        a: a.build(),
        b,
        cones,
        linear_rows: k,
        cone_dim,
        n_u: n,
    })
}

fn to_qp_form(req: &DirectionRequest) -> Result<ConicProgram, DirectionError> {
    req.validate()?;
    let n = req.n();
    let k = req.rows();
    let mut p = CscBuilder::new(n, n);
    for j in 0..n {
        p.push(j, j, 1.0);
    }
    let mut a = CscBuilder::new(k, n);
    let mut b = Vec::with_capacity(k);
    for r in 0..k {
        for j in 0..n {
            a.push(r, j, req.g_gradients[(r, j)]);
        }
        b.push(-req.alpha * req.g_values[r]);
    }
    Ok(ConicProgram {
        p: p.build(),
        q: req.grad_f.iter().copied().collect(),
        a: a.build(),
        b,
        cones: vec![SupportedConeT::NonnegativeConeT(k)],
        linear_rows: k,
        cone_dim: 0,
        n_u: n,
    })
}

struct RawSolution {
    z: Vec<f64>,
    duals: Vec<f64>,
    status: DirectionStatus,
    elapsed_ns: u64,
}

fn run_clarabel(prog: &ConicProgram, tol: f64) -> Result<RawSolution, DirectionError> {
    let settings = DefaultSettings::<f64> {
        verbose: false,
        tol_feas: tol,
        tol_gap_abs: tol,
        tol_gap_rel: tol,
        max_iter: 200,
        ..DefaultSettings::default()
    };
    let start = Instant::now();
    let mut solver = DefaultSolver::new(&prog.p, &prog.q, &prog.a, &prog.b, &prog.cones, settings)
        .map_err(|e| DirectionError::Setup(format!("{e:?}")))?;
    solver.solve();
    let elapsed_ns = start.elapsed().as_nanos() as u64;
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => DirectionStatus::Optimal,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => DirectionStatus::MaxIter,
        _ => DirectionStatus::NumericalFailure,
    };
    let finite = sol.x.iter().chain(sol.z.iter()).all(|v| v.is_finite());
    Ok(RawSolution {
        z: sol.x.clone(),
        duals: sol.z[..prog.linear_rows].to_vec(),
        status: if finite { status } else { DirectionStatus::NumericalFailure },
        elapsed_ns,
    })
}

fn assemble(
    req: &DirectionRequest,
    prog: &ConicProgram,
    raw: &RawSolution,
    epigraph: bool,
    elapsed_ns: u64,
) -> DirectionSolution {
    let u = DVector::from_column_slice(&raw.z[..prog.n_u]);
    let s = if epigraph { raw.z[prog.n_u] } else { u.norm_squared() };
    let objective = 0.5 * (&u + &req.grad_f).norm_squared();
    DirectionSolution {
        u,
        s,
        multipliers: DVector::from_column_slice(&raw.duals),
        objective,
        status: raw.status,
        solve_ns: elapsed_ns,
    }
}

/// Solve `prog` and post-verify the multipliers, retrying once at a tighter tolerance when the
/// verification residual exceeds `tol_kkt`.
fn solve_verified(
    req: &DirectionRequest,
    prog: &ConicProgram,
    tols: SubproblemTolerances,
    epigraph: bool,
) -> Result<DirectionSolution, DirectionError> {
    let weight_scale = if epigraph { 1.0 } else { 0.0 };
    let mut elapsed = 0;
    let mut last = None;
    for tol in [tols.tol_sub, tols.tol_sub * 1e-2] {
        let raw = run_clarabel(prog, tol)?;
        elapsed += raw.elapsed_ns;
        let mut sol = assemble(req, prog, &raw, epigraph, elapsed);
        if sol.status != DirectionStatus::Optimal {
            last = Some(sol);
            continue;
        }
        if let Some((u, lambda)) = polish(req, &sol.u, &sol.multipliers, weight_scale) {
            sol.s = if epigraph { sol.s.max(u.norm_squared()) } else { u.norm_squared() };
            sol.objective = 0.5 * (&u + &req.grad_f).norm_squared();
            sol.u = u;
            sol.multipliers = lambda;
        }
        if kkt_residual_scaled(req, &sol.u, &sol.multipliers, weight_scale) <= tols.tol_kkt {
            return Ok(sol);
        }
        sol.status = DirectionStatus::NumericalFailure;
        last = Some(sol);
    }
    Ok(last.expect("at least one attempt"))
}

/// Newton refinement of the optimality system restricted to the rows the interior-point
/// solution identifies as active (`λ_i + c_i > 0`). Returns the refined pair only when it is
/// primal and dual feasible and its residual is no larger than the input's.
fn polish(
    req: &DirectionRequest,
    u0: &DVector<f64>,
    lambda0: &DVector<f64>,
    weight_scale: f64,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = req.n();
    let c0 = req.constraint_residuals(u0, weight_scale);
    let mut active: Vec<usize> = (0..req.rows())
        .filter(|&i| lambda0[i] + c0[i] > 0.0)
        .collect();
    let before = kkt_residual_scaled(req, u0, lambda0, weight_scale);

    for _pass in 0..2 {
        let k = active.len();
        if k > n {
            return None;
        }
        let mut u = u0.clone();
        let mut lam = DVector::from_iterator(k, active.iter().map(|&i| lambda0[i].max(0.0)));
        for _ in 0..8 {
            let wl: f64 = active
                .iter()
                .zip(lam.iter())
                .map(|(&i, &l)| req.weights[i] * l)
                .sum();
            let diag = 1.0 + 2.0 * weight_scale * wl;
            let unorm2 = u.norm_squared();
            let mut jac = DMatrix::<f64>::zeros(n + k, n + k);
            let mut rhs = DVector::<f64>::zeros(n + k);
            let mut stat = &u + &req.grad_f;
            for (r, &i) in active.iter().enumerate() {
                let row = req.g_gradients.row(i).transpose()
                    + 2.0 * weight_scale * req.weights[i] * &u;
                stat += lam[r] * &row;
                for j in 0..n {
                    jac[(j, n + r)] = row[j];
                    jac[(n + r, j)] = row[j];
                }
                rhs[n + r] = -((req.g_gradients.row(i) * &u)[0]
                    + req.alpha * req.g_values[i]
                    + weight_scale * req.weights[i] * unorm2);
            }
            for j in 0..n {
                jac[(j, j)] = diag;
                rhs[j] = -stat[j];
            }
            if rhs.amax() <= 1e-15 * (1.0 + req.grad_f.amax()) {
                break;
            }
            // Minimum-norm step: duplicated or zero-gradient active rows make `jac` singular.
            let svd = jac.svd(true, true);
            let cutoff = 1e-12 * svd.singular_values.max();
            let step = svd.solve(&rhs, cutoff).ok()?;
            u += step.rows(0, n);
            lam += step.rows(n, k);
            if !(u.iter().chain(lam.iter()).all(|v| v.is_finite())) {
                return None;
            }
        }

        let negative: Vec<usize> = active
            .iter()
            .zip(lam.iter())
            .filter(|(_, &l)| l < 0.0)
            .map(|(&i, _)| i)
            .collect();
        if !negative.is_empty() {
            active.retain(|i| !negative.contains(i));
            continue;
        }
        let mut full = DVector::zeros(req.rows());
        for (r, &i) in active.iter().enumerate() {
            full[i] = lam[r];
        }
        let after = kkt_residual_scaled(req, &u, &full, weight_scale);
        return (after <= before).then_some((u, full));
    }
    None
}

/// Unconstrained projection `u = -∇f`, used when no rows are active.
fn unconstrained(req: &DirectionRequest) -> DirectionSolution {
    let u = -&req.grad_f;
    DirectionSolution {
        s: u.norm_squared(),
        u,
        multipliers: DVector::zeros(0),
        objective: 0.0,
        status: DirectionStatus::Optimal,
        solve_ns: 0,
    }
}

/// Safe direction from the epigraph conic program. Multipliers are the duals of the linear rows.
pub fn solve_direction(
    req: &DirectionRequest,
    tols: SubproblemTolerances,
) -> Result<DirectionSolution, DirectionError> {
    req.validate()?;
    if req.rows() == 0 {
        // The epigraph variable is unbounded above without linear rows; the answer is explicit.
        return Ok(unconstrained(req));
    }
    let prog = to_conic_form(req)?;
    solve_verified(req, &prog, tols, true)
}

/// Baseline direction from the linearized QP; weights are ignored.
pub fn solve_direction_qp(
    req: &DirectionRequest,
    tols: SubproblemTolerances,
) -> Result<DirectionSolution, DirectionError> {
    req.validate()?;
    if req.rows() == 0 {
        return Ok(unconstrained(req));
    }
    let prog = to_qp_form(req)?;
    solve_verified(req, &prog, tols, false)
}

fn kkt_residual_scaled(
    req: &DirectionRequest,
    u: &DVector<f64>,
    lambda: &DVector<f64>,
    weight_scale: f64,
) -> f64 {
    if lambda.len() != req.rows() || u.len() != req.n() {
        return f64::INFINITY;
    }
    let mut stat = u + &req.grad_f + req.g_gradients.transpose() * lambda;
    let wl: f64 = req.weights.iter().zip(lambda.iter()).map(|(w, l)| w * l).sum();
    stat += 2.0 * weight_scale * wl * u;
    let c = req.constraint_residuals(u, weight_scale);
    let stationarity = stat.amax();
    let primal = c.iter().fold(0.0_f64, |acc, &ci| acc.max(ci));
    let dual = lambda.iter().fold(0.0_f64, |acc, &l| acc.max(-l));
    let comp = c
        .iter()
        .zip(lambda.iter())
        .fold(0.0_f64, |acc, (&ci, &l)| acc.max((l * ci).abs()));
    stationarity.max(primal).max(dual).max(comp)
}

/// Largest block of the QCQP optimality system at `(sol.u, sol.multipliers)`: stationarity
/// (∞-norm), primal violation, dual violation, complementarity.
pub fn verify_direction_kkt(req: &DirectionRequest, sol: &DirectionSolution) -> f64 {
    kkt_residual_scaled(req, &sol.u, &sol.multipliers, 1.0)
}

/// QCQP constraint values `∇g_i'u + α g_i + w_i ||u||²` for each active row.
pub fn qcqp_constraint_values(req: &DirectionRequest, u: &DVector<f64>) -> DVector<f64> {
    req.constraint_residuals(u, 1.0)
}
