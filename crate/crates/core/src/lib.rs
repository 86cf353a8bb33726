//! Safe-set QCQP descent for smooth inequality-constrained problems.
//!
//! Every iterate stays feasible: the search direction solves a small convex QCQP whose
//! quadratic terms tilt it away from the constraint boundary, and a backtracking step keeps the
//! trial point inside the feasible set.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod direction;
pub mod flow;
pub mod linesearch;
pub mod problem;
pub mod problems;
pub mod solver;

/// Linear algebra types used throughout the public API.
pub use nalgebra;

pub use direction::{
    solve_direction, solve_direction_qp, to_conic_form, DirectionError, DirectionRequest,
    DirectionSolution, DirectionStatus, SubproblemTolerances,
};
pub use flow::{integrate_flow, FlowError, FlowTrace};
pub use linesearch::{backtrack, theoretical_step_bound, BacktrackParams, StepResult};
pub use problem::{KktResidual, Point, ProblemDef, ProblemError, ScalarMap, SmoothModel};
pub use solver::{
    solve, ss_qcqp, ss_qcqp_as, ss_qp_baseline, SolveResult, SolveStatus, SolverConfig,
    SolverError, TraceRecord, Variant,
};
