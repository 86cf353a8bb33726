//! Safeguarded backtracking: halve `t` from 1 until the trial point is feasible for every
//! constraint and satisfies the Armijo decrease.

use nalgebra::DVector;

use crate::problem::{max_entry, ProblemDef, ProblemError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktrackParams {
    /// Armijo fraction, in (0, 1).
    pub gamma: f64,
    pub max_halvings: u32,
    /// Largest admissible constraint value at the trial point.
    pub feas_tol: f64,
}

impl Default for BacktrackParams {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            max_halvings: 60,
            feas_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// `2^-halvings`
    pub t: f64,
    pub halvings: u32,
    pub trial: DVector<f64>,
    pub f_trial: f64,
    /// All `m` constraint values at `trial`.
    pub g_trial: DVector<f64>,
    pub accepted: bool,
}

/// Backtrack along `u` from a feasible `x`.
///
/// The sufficient-decrease slope is `min(∇f'u, -||u||²)`. For a safe direction
/// `∇f'u <= -||u||²` already holds, so this only matters when the subproblem solution carries
/// solver round-off; the accepted step then still certifies `f(trial) <= f(x) + γ t ∇f'u` and
/// `f(trial) <= f(x) - γ t ||u||²`.
pub fn backtrack(
    p: &ProblemDef,
    x: &DVector<f64>,
    f_x: f64,
    grad_f: &DVector<f64>,
    u: &DVector<f64>,
    params: &BacktrackParams,
) -> Result<StepResult, ProblemError> {
    let slope = grad_f.dot(u).min(-u.norm_squared());
    let mut last = None;
    for halvings in 0..=params.max_halvings {
        let t = 0.5_f64.powi(halvings as i32);
        let trial = x + t * u;
        let g_trial = p.constraint_values(&trial)?;
        let feasible = max_entry(&g_trial) <= params.feas_tol;
        let f_trial = if feasible {
            p.objective_value(&trial)?
        } else {
            f64::INFINITY
        };
        let accepted = feasible && f_trial <= f_x + params.gamma * t * slope;
        let step = StepResult {
            t,
            halvings,
            trial,
            f_trial,
            g_trial,
            accepted,
        };
        if accepted {
            return Ok(step);
        }
        last = Some(step);
    }
    Ok(last.expect("at least one trial"))
}

/// Uniform step-size floor `min{1/α, 2(1-γ)/L_f, 2w̲/L_1, ..., 2w̲/L_m}` below which every
/// step passes both line-search tests.
pub fn theoretical_step_bound(
    alpha: f64,
    gamma: f64,
    lipschitz_f: f64,
    w_floor: f64,
    lipschitz_g: &[f64],
) -> f64 {
    lipschitz_g
        .iter()
        .map(|&l| 2.0 * w_floor / l)
        .fold((1.0 / alpha).min(2.0 * (1.0 - gamma) / lipschitz_f), f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ScalarMap;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn armijo_halves_once_on_parabola() {
        let p = ProblemDef::from_maps(
            "parabola",
            1,
            ScalarMap::new(|x| x[0] * x[0], |x| 2.0 * x),
            vec![],
        )
        .unwrap();
        let x = v(&[1.0]);
        let params = BacktrackParams {
            gamma: 0.1,
            ..Default::default()
        };
        // t = 1: f = 1 > 1 - 0.4; t = 0.5: f = 0 <= 0.8
        let step = backtrack(&p, &x, 1.0, &v(&[2.0]), &v(&[-2.0]), &params).unwrap();
        assert!(step.accepted);
        assert_eq!(step.t, 0.5);
        assert_eq!(step.halvings, 1);
        assert_eq!(step.f_trial, 0.0);
    }

    #[test]
    fn infeasible_trial_is_halved() {
        // f = -x, g = x - 1, from x = 0 along u = 2
        let p = ProblemDef::from_maps(
            "halfline",
            1,
            ScalarMap::new(|x| -x[0], |_| v(&[-1.0])),
            vec![ScalarMap::new(|x| x[0] - 1.0, |_| v(&[1.0]))],
        )
        .unwrap();
        let step = backtrack(
            &p,
            &v(&[0.0]),
            0.0,
            &v(&[-1.0]),
            &v(&[2.0]),
            &BacktrackParams::default(),
        )
        .unwrap();
        assert!(step.accepted);
        assert_eq!(step.t, 0.5);
        assert_eq!(step.trial, v(&[1.0]));
        assert_eq!(step.g_trial, v(&[0.0]));
    }

    #[test]
    fn full_step_accepted_immediately() {
        let p = ProblemDef::from_maps(
            "linear",
            1,
            ScalarMap::new(|x| x[0], |_| v(&[1.0])),
            vec![],
        )
        .unwrap();
        let step =
            backtrack(&p, &v(&[0.0]), 0.0, &v(&[1.0]), &v(&[-1.0]), &Default::default()).unwrap();
        assert_eq!((step.t, step.halvings, step.accepted), (1.0, 0, true));
    }

    #[test]
    fn exhaustion_reports_not_accepted() {
        // ascent direction never passes Armijo
        let p = ProblemDef::from_maps(
            "linear",
            1,
            ScalarMap::new(|x| x[0], |_| v(&[1.0])),
            vec![],
        )
        .unwrap();
        let params = BacktrackParams {
            max_halvings: 5,
            ..Default::default()
        };
        let step = backtrack(&p, &v(&[0.0]), 0.0, &v(&[1.0]), &v(&[1.0]), &params).unwrap();
        assert!(!step.accepted);
        assert_eq!(step.halvings, 5);
        assert_eq!(step.t, 1.0 / 32.0);
    }

    #[test]
    fn step_bound_formula() {
        assert_eq!(theoretical_step_bound(1.0, 0.5, 2.0, 0.5, &[1.0]), 0.5);
        assert_eq!(theoretical_step_bound(10.0, 0.5, 1.0, 1.0, &[1.0]), 0.1);
        assert!((theoretical_step_bound(1.0, 0.9, 1.0, 1.0, &[]) - 0.2).abs() < 1e-15);
    }
}
