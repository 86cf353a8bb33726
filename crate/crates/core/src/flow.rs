//! Forward-Euler integration of `ẋ = u(x)` with the weights pinned at `w̲`.
//!
//! No line search and no weight adaptation: this samples the continuous vector field so its
//! invariance and energy bounds can be checked numerically.

use nalgebra::DVector;
use thiserror::Error;

use crate::direction::{solve_direction, DirectionError, DirectionRequest, DirectionStatus};
use crate::problem::{max_entry, Point, ProblemDef, ProblemError};
use crate::solver::SolverConfig;

/// Constraint violation that aborts the integration.
pub const BREACH_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid flow settings: {0}")]
    Invalid(String),
    #[error("initial point is infeasible (max constraint value {max_violation:e})")]
    InfeasibleStart { max_violation: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Direction(#[from] DirectionError),
    #[error("direction subproblem failed at t = {time}")]
    Subproblem { time: f64 },
    #[error("constraint value {max_violation:e} at t = {time}; reduce the step size")]
    FeasibilityBreach { time: f64, max_violation: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub u_norm_sq: Vec<f64>,
    pub f_values: Vec<f64>,
    pub max_g: Vec<f64>,
    /// Trapezoidal `½∫‖u‖² dτ` over the whole grid.
    pub integral_half_u_sq: f64,
    /// Direction multipliers at the last node, one per constraint.
    pub final_multipliers: DVector<f64>,
}

impl FlowTrace {
    /// Running minimum of `‖u‖²` over the nodes.
    pub fn min_u_norm_sq(&self) -> f64 {
        self.u_norm_sq.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_violation(&self) -> f64 {
        self.max_g.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Integrate from `x0` over `[0, horizon]` with step `h`; the last step is shortened to land
/// on `horizon` exactly.
pub fn integrate_flow(
    p: &ProblemDef,
    x0: &Point,
    h: f64,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<FlowTrace, FlowError> {
    if !(h > 0.0 && h.is_finite() && horizon > 0.0 && horizon.is_finite()) {
        return Err(FlowError::Invalid("h and T must be positive and finite".into()));
    }
    cfg.validate().map_err(|e| FlowError::Invalid(e.to_string()))?;
    if x0.len() != p.n() {
        return Err(ProblemError::DimensionMismatch {
            expected: p.n(),
            actual: x0.len(),
        }
        .into());
    }

    let all = p.all_indices();
    let weights = DVector::from_element(p.m(), cfg.w_floor);
    let steps = (horizon / h - 1e-9).ceil().max(1.0) as usize;

    let mut x = x0.coords().clone();
    let mut trace = FlowTrace {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        u_norm_sq: Vec::with_capacity(steps + 1),
        f_values: Vec::with_capacity(steps + 1),
        max_g: Vec::with_capacity(steps + 1),
        integral_half_u_sq: 0.0,
        final_multipliers: DVector::zeros(p.m()),
    };
    let mut t = 0.0;
    for k in 0..=steps {
        let (f, grad_f) = p.eval_objective(&x)?;
        let (g_values, g_gradients) = p.eval_constraints(&x, &all)?;
        let worst = max_entry(&g_values);
        if k == 0 && worst > cfg.feas_tol {
            return Err(FlowError::InfeasibleStart { max_violation: worst });
        }
        if worst > BREACH_TOL {
            return Err(FlowError::FeasibilityBreach {
                time: t,
                max_violation: worst,
            });
        }
        let req = DirectionRequest {
            grad_f,
            g_values,
            g_gradients,
            active: all.clone(),
            alpha: cfg.alpha,
            weights: weights.clone(),
        };
        let sol = solve_direction(&req, cfg.tolerances())?;
        if sol.status != DirectionStatus::Optimal {
            return Err(FlowError::Subproblem { time: t });
        }
        let u_sq = sol.u.norm_squared();
        if let (Some(&t_prev), Some(&u_prev)) = (trace.times.last(), trace.u_norm_sq.last()) {
            trace.integral_half_u_sq += 0.25 * (t - t_prev) * (u_prev + u_sq);
        }
        trace.times.push(t);
        trace.states.push(x.clone());
        trace.u_norm_sq.push(u_sq);
        trace.f_values.push(f);
        trace.max_g.push(worst);
        if k == steps {
            if sol.multipliers.len() == p.m() {
                trace.final_multipliers = sol.multipliers;
            }
            break;
        }
        let t_next = if k + 1 == steps { horizon } else { (k + 1) as f64 * h };
        x += (t_next - t) * &sol.u;
        t = t_next;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ScalarMap;
    use crate::problems::analytic::ball_linear;

    #[test]
    fn stationary_start_stays_put() {
        // f = x, g = -x at x = 0
        let p = ProblemDef::from_maps(
            "edge",
            1,
            ScalarMap::new(|x| x[0], |_| DVector::from_element(1, 1.0)),
            vec![ScalarMap::new(|x| -x[0], |_| DVector::from_element(1, -1.0))],
        )
        .unwrap();
        let x0 = Point::from_slice(&[0.0]).unwrap();
        let tr = integrate_flow(&p, &x0, 0.1, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(tr.times.len(), 11);
        assert!(tr.states.iter().all(|s| s[0].abs() < 1e-8));
        assert!(tr.integral_half_u_sq < 1e-14);
    }

    #[test]
    fn grid_lands_on_horizon() {
        let p = ball_linear();
        let x0 = Point::from_slice(&[0.0, 0.0]).unwrap();
        let tr = integrate_flow(&p, &x0, 0.3, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(tr.times.len(), 5);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_settings() {
        let p = ball_linear();
        let x0 = Point::from_slice(&[0.0, 0.0]).unwrap();
        let cfg = SolverConfig::default();
        assert!(matches!(integrate_flow(&p, &x0, 0.0, 1.0, &cfg), Err(FlowError::Invalid(_))));
        let out = Point::from_slice(&[2.0, 0.0]).unwrap();
        assert!(matches!(
            integrate_flow(&p, &out, 0.1, 1.0, &cfg),
            Err(FlowError::InfeasibleStart { .. })
        ));
    }

    #[test]
    fn large_step_breaches() {
        // a step of 1.5 from the origin overshoots the unit circle
        let p = ball_linear();
        let x0 = Point::from_slice(&[0.0, 0.0]).unwrap();
        let err = integrate_flow(&p, &x0, 1.5, 3.0, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, FlowError::FeasibilityBreach { .. }), "{err}");
    }
}
