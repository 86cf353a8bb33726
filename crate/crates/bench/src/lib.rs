//! Fixtures shared by the benchmarks.

use ssqcqp_core::nalgebra::DVector;
use ssqcqp_core::problems::{build, Instance, NavOptions};
use ssqcqp_core::solver::select_active_set;
use ssqcqp_core::{DirectionRequest, SolverConfig};

pub fn navigation(agents: usize, horizon: usize) -> Instance {
    build(
        "nav",
        &NavOptions {
            agents,
            horizon,
            ..Default::default()
        },
    )
    .expect("registered problem")
}

/// Direction subproblem at the starting point, over every row or over `A_δ ∪ T_q`.
pub fn start_request(inst: &Instance, active_set: bool) -> DirectionRequest {
    let p = &inst.problem;
    let x = inst.x0.coords();
    let cfg = SolverConfig::default();
    let (_, grad_f) = p.eval_objective(x).expect("finite objective");
    let all = p.constraint_values(x).expect("finite constraints");
    let active = if active_set {
        select_active_set(&all, cfg.delta, cfg.q_percent)
    } else {
        p.all_indices()
    };
    let (g_values, g_gradients) = p.eval_constraints(x, &active).expect("finite constraints");
    DirectionRequest {
        grad_f,
        g_values,
        g_gradients,
        active: active.clone(),
        alpha: cfg.alpha,
        weights: DVector::from_element(active.len(), cfg.w_floor),
    }
}

