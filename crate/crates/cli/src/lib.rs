//! Command-line front end: solve registered problems and export plot-ready series.
//!
//! Exit codes: 0 success (converged, max_iter, or a completed flow), 1 internal error,
//! 2 usage, 3 unknown problem, 4 infeasible start, 5 subproblem failure, 6 line-search
//! failure, 7 I/O, 8 missing series or malformed trace, 9 flow left the feasible set.

pub mod args;
pub mod document;
pub mod error;
pub mod export;
pub mod solve;

pub use error::CliError;
