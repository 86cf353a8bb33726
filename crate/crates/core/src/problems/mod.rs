//! Named test problems: three small analytic instances and the multi-agent navigation problem.

pub mod analytic;
pub mod dare;
pub mod navigation;

use nalgebra::DVector;
use thiserror::Error;

use crate::problem::{Point, ProblemDef};
use navigation::{make_navigation_problem, NavError, NavigationParams, DEFAULT_COLLISION_RADIUS};

pub const PROBLEM_KEYS: [&str; 4] = ["ball-linear", "box-qp", "rosenbrock-ball", "nav"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("unknown problem `{0}` (expected one of ball-linear, box-qp, rosenbrock-ball, nav)")]
    Unknown(String),
    #[error(transparent)]
    Navigation(#[from] NavError),
}

/// Parameters for the `nav` key; ignored by the others.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavOptions {
    pub agents: usize,
    pub horizon: usize,
    pub d_min: f64,
}

impl Default for NavOptions {
    fn default() -> Self {
        Self {
            agents: 4,
            horizon: 40,
            d_min: DEFAULT_COLLISION_RADIUS,
        }
    }
}

/// A problem with its starting point and, where known, the optimum.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: ProblemDef,
    pub x0: Point,
    pub f_star: Option<f64>,
    pub minimizer: Option<DVector<f64>>,
    pub navigation: Option<NavigationParams>,
}

fn analytic(problem: ProblemDef, f_star: f64, minimizer: [f64; 2]) -> Instance {
    Instance {
        problem,
        x0: Point::from_slice(&[0.0, 0.0]).expect("finite"),
        f_star: Some(f_star),
        minimizer: Some(DVector::from_column_slice(&minimizer)),
        navigation: None,
    }
}

pub fn build(key: &str, nav: &NavOptions) -> Result<Instance, RegistryError> {
    match key {
        "ball-linear" => Ok(analytic(analytic::ball_linear(), -1.0, [0.0, -1.0])),
        "box-qp" => Ok(analytic(analytic::box_qp(), 2.0, [1.0, 1.0])),
        "rosenbrock-ball" => Ok(analytic(analytic::rosenbrock_ball(), 0.0, [1.0, 1.0])),
        "nav" => {
            let params = NavigationParams::standard(nav.agents, nav.horizon, nav.d_min)?;
            let problem = make_navigation_problem(&params)?;
            let x0 = Point::new(params.reference_inputs()).expect("finite");
            Ok(Instance {
                problem,
                x0,
                f_star: None,
                minimizer: None,
                navigation: Some(params),
            })
        }
        other => Err(RegistryError::Unknown(other.to_string())),
    }
}

/// Every analytic instance, in registry order.
pub fn analytic_suite() -> Vec<Instance> {
    PROBLEM_KEYS
        .iter()
        .filter(|&&k| k != "nav")
        .map(|k| build(k, &NavOptions::default()).expect("static problem"))
        .collect()
}
