//! Acceptance gate. Runs without the libtest harness so every criterion prints exactly one
//! PASS/FAIL line; the process exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{dmatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssqcqp_core::problems::navigation::NavigationParams;
use ssqcqp_core::problems::{build, Instance, NavOptions, PROBLEM_KEYS};
use ssqcqp_core::{
    integrate_flow, solve, solve_direction, solve_direction_qp, theoretical_step_bound,
    DirectionRequest, DirectionStatus, SolveResult, SolveStatus, SolverConfig,
    SubproblemTolerances, Variant,
};

const FEAS_TOL: f64 = 1e-9;
const DESCENT_SLACK: f64 = 1e-10;
const KKT_TOL: f64 = 1e-4;
const CONIC_DIRECT_TOL: f64 = 1e-6;
const TANGENT_TOL: f64 = 1e-8;
const TILT_U_TOL: f64 = 1e-3;
const AS_FRACTION: f64 = 0.30;
const FLOW_SLACK: f64 = 1.01;
const FLOW_FEAS_TOL: f64 = 1e-7;
const FD_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-5;
const RUN_BUDGET: Duration = Duration::from_secs(60);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn small_nav() -> NavOptions {
    NavOptions {
        agents: 2,
        horizon: 10,
        ..Default::default()
    }
}

struct Run {
    label: String,
    inst: Instance,
    variant: Variant,
    result: SolveResult,
}

/// Both variants on the three analytic problems and the 2-agent, 10-step navigation problem.
fn benchmark_runs() -> (Vec<Run>, Duration) {
    let started = Instant::now();
    let cfg = SolverConfig::default();
    let mut runs = Vec::new();
    for key in PROBLEM_KEYS {
        let inst = build(key, &small_nav()).expect("registered");
        for variant in [Variant::Full, Variant::ActiveSet] {
            let result = solve(&inst.problem, &inst.x0, &cfg, variant).expect("solver runs");
            runs.push(Run {
                label: format!("{key}/{variant:?}"),
                inst: inst.clone(),
                variant,
                result,
            });
        }
    }
    (runs, started.elapsed())
}

fn anytime_feasibility(runs: &[Run], elapsed: Duration) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut worst_label = "";
    for run in runs {
        for rec in &run.result.trace {
            if rec.max_g > worst {
                worst = rec.max_g;
                worst_label = &run.label;
            }
        }
        // the final iterate is covered by the last record; check it directly as well
        let g = run.inst.problem.constraint_values(&run.result.x_final).unwrap();
        let last = g.max();
        if last > worst {
            worst = last;
            worst_label = &run.label;
        }
    }
    outcome(
        worst <= FEAS_TOL && elapsed < RUN_BUDGET,
        format!(
            "{} runs, worst max_g {worst:.3e} ({worst_label}), wall {:.1}s",
            runs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn monotone_descent(runs: &[Run], gamma: f64) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut steps = 0;
    for run in runs {
        for pair in run.result.trace.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let excess = b.f - (a.f - gamma * a.step * a.u_norm_sq);
            worst = worst.max(excess);
            steps += 1;
        }
    }
    outcome(
        worst <= DESCENT_SLACK,
        format!("{steps} accepted steps, largest excess over the Armijo bound {worst:.3e}"),
    )
}

fn rate_bound() -> Outcome {
    let inst = build("ball-linear", &NavOptions::default()).unwrap();
    let p = &inst.problem;
    let cfg = SolverConfig {
        w_floor: 1.0,
        adaptive_w: false,
        max_iter: 500,
        ..Default::default()
    };
    let t_floor = theoretical_step_bound(
        cfg.alpha,
        cfg.gamma,
        p.lipschitz_f().unwrap(),
        cfg.w_floor,
        p.lipschitz_g().unwrap(),
    );
    let res = solve(p, &inst.x0, &cfg, Variant::Full).unwrap();
    let gap = p.objective_value(&inst.x0).unwrap() - inst.f_star.unwrap();
    let mut running_min = f64::INFINITY;
    let mut ok = true;
    let mut tightest = f64::INFINITY;
    for k in 0..=500usize {
        // after convergence the iterate no longer moves, so ||u|| stays at its last value
        let u_sq = res
            .trace
            .get(k)
            .or(res.trace.last())
            .map(|r| r.u_norm_sq)
            .unwrap();
        running_min = running_min.min(u_sq);
        let bound = gap / (cfg.gamma * 0.5 * t_floor * (k + 1) as f64);
        ok &= running_min <= bound;
        tightest = tightest.min(bound - running_min);
    }
    outcome(
        ok,
        format!(
            "t_floor = {t_floor}, {} iterations, smallest slack {tightest:.3e}",
            res.trace.len()
        ),
    )
}

fn stationarity(runs: &[Run]) -> Outcome {
    let mut checked = 0;
    let mut worst = 0.0_f64;
    let mut skipped = Vec::new();
    for run in runs {
        if run.result.status != SolveStatus::Converged {
            skipped.push(format!("{}={:?}", run.label, run.result.status));
            continue;
        }
        checked += 1;
        let lam = &run.result.multipliers;
        assert_eq!(lam.len(), run.inst.problem.m());
        let r = run
            .inst
            .problem
            .kkt_residual(&run.result.x_final, lam)
            .unwrap();
        worst = worst.max(r.max_component());
    }
    outcome(
        checked > 0 && worst <= KKT_TOL,
        format!(
            "{checked} converged runs, worst residual {worst:.3e}; not converged: {}",
            if skipped.is_empty() {
                "none".to_string()
            } else {
                skipped.join(", ")
            }
        ),
    )
}

fn conic_direct_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let tols = SubproblemTolerances::default();
    let mut worst = 0.0_f64;
    let mut worst_oracle_kkt = 0.0_f64;
    let mut failures = 0;
    for _ in 0..100 {
        let req = common::random_request(&mut rng);
        let (u_ref, lam_ref) = common::qcqp_oracle(&req);
        worst_oracle_kkt = worst_oracle_kkt.max(common::oracle_kkt(&req, &u_ref, &lam_ref));
        match solve_direction(&req, tols) {
            Ok(sol) if sol.status == DirectionStatus::Optimal => {
                worst = worst.max((&sol.u - &u_ref).amax());
            }
            _ => failures += 1,
        }
    }
    outcome(
        failures == 0 && worst <= CONIC_DIRECT_TOL,
        format!(
            "100 instances, max |u_conic - u_direct| = {worst:.3e}, oracle KKT {worst_oracle_kkt:.1e}, failures {failures}"
        ),
    )
}

fn boundary_tilt() -> Outcome {
    let req = |w: f64| DirectionRequest {
        grad_f: DVector::from_vec(vec![0.0, 1.0]),
        g_values: DVector::from_vec(vec![0.0]),
        g_gradients: dmatrix![2.0, 0.0],
        active: vec![0],
        alpha: 1.0,
        weights: DVector::from_vec(vec![w]),
    };
    let tols = SubproblemTolerances::default();
    let grad_g = DVector::from_vec(vec![2.0, 0.0]);
    let qp = solve_direction_qp(&req(0.5), tols).unwrap();
    let qc = solve_direction(&req(0.5), tols).unwrap();
    let tangency = grad_g.dot(&qp.u);
    let inward = grad_g.dot(&qc.u) + 0.5 * qc.u.norm_squared();
    // closed form: λ = (√(1+w²) - 1)/(2w), u = -(2λ, 1)/(1+λ)
    let w: f64 = 0.5;
    let lam = ((1.0 + w * w).sqrt() - 1.0) / (2.0 * w);
    let u_exact = DVector::from_vec(vec![-2.0 * lam / (1.0 + lam), -1.0 / (1.0 + lam)]);
    let u_err = (&qc.u - &u_exact).amax();
    outcome(
        tangency.abs() <= TANGENT_TOL && inward <= TANGENT_TOL && u_err <= TILT_U_TOL,
        format!(
            "QP grad_g'u = {tangency:.2e}, QCQP grad_g'u + w|u|^2 = {inward:.2e}, u = ({:.4}, {:.4}), error {u_err:.1e}",
            qc.u[0], qc.u[1]
        ),
    )
}

fn problem_size() -> Outcome {
    let inst = build("nav", &NavOptions::default()).unwrap();
    let (n, m) = (inst.problem.n(), inst.problem.m());
    outcome(n == 320 && m == 2320, format!("n = {n}, m = {m}"))
}

fn active_set_economy(runs: &[Run]) -> Outcome {
    let find = |v: Variant| {
        runs.iter()
            .find(|r| r.inst.navigation.is_some() && r.variant == v)
            .expect("navigation run")
    };
    let (full, act) = (find(Variant::Full), find(Variant::ActiveSet));
    let m = act.inst.problem.m() as f64;
    let mean = act.result.trace.iter().map(|r| r.active_count as f64).sum::<f64>()
        / act.result.trace.len() as f64;
    let (t_full, t_as) = (full.result.total_subproblem_ns(), act.result.total_subproblem_ns());
    outcome(
        mean <= AS_FRACTION * m && t_as < t_full,
        format!(
            "mean active {mean:.1} of {m} ({:.1}%), subproblem time {:.3}s vs full {:.3}s",
            100.0 * mean / m,
            t_as as f64 * 1e-9,
            t_full as f64 * 1e-9
        ),
    )
}

fn flow_bound() -> Outcome {
    let inst = build("ball-linear", &NavOptions::default()).unwrap();
    let trace = match integrate_flow(&inst.problem, &inst.x0, 1e-3, 10.0, &SolverConfig::default())
    {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("integration failed: {e}")),
    };
    let gap = trace.f_values[0] - inst.f_star.unwrap();
    let integral = trace.integral_half_u_sq;
    let breach = trace.max_violation();
    outcome(
        integral <= gap * FLOW_SLACK && breach <= FLOW_FEAS_TOL,
        format!(
            "½∫|u|² = {integral:.6} vs f(x0)-f* = {gap}, max_g {breach:.2e}, final f {:.6}",
            trace.f_values.last().unwrap()
        ),
    )
}

fn random_feasible_points(inst: &Instance, rng: &mut ChaCha8Rng, count: usize) -> Vec<DVector<f64>> {
    let p = &inst.problem;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = match &inst.navigation {
            Some(nav) => perturbed_inputs(nav, rng),
            None => DVector::from_fn(p.n(), |_, _| rng.gen_range(-1.5..1.5)),
        };
        if p.check_feasibility(&x, 0.0).unwrap().feasible {
            out.push(x);
        }
    }
    out
}

fn perturbed_inputs(nav: &NavigationParams, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut u = nav.reference_inputs();
    for v in u.iter_mut() {
        *v += rng.gen_range(-1.0..1.0);
    }
    u
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0010);
    let mut parts = Vec::new();
    let mut ok = true;
    let configs = [NavOptions::default(), small_nav()];
    for key in PROBLEM_KEYS {
        let variants: &[NavOptions] = if key == "nav" { &configs } else { &configs[..1] };
        for opts in variants {
            let inst = build(key, opts).unwrap();
            let worst = random_feasible_points(&inst, &mut rng, 20)
                .iter()
                .map(|x| inst.problem.fd_gradient_check(x, FD_STEP).unwrap())
                .fold(0.0_f64, f64::max);
            ok &= worst <= FD_TOL;
            parts.push(format!("{} {worst:.1e}", inst.problem.name()));
        }
    }
    outcome(ok, format!("worst |fd - grad| at 20 points: {}", parts.join(", ")))
}

fn main() -> ExitCode {
    let (runs, elapsed) = benchmark_runs();
    let gamma = SolverConfig::default().gamma;
    let results: Vec<(&str, Outcome)> = vec![
        ("anytime feasibility", anytime_feasibility(&runs, elapsed)),
        ("monotone descent", monotone_descent(&runs, gamma)),
        ("rate bound", rate_bound()),
        ("stationarity", stationarity(&runs)),
        ("conic/direct equivalence", conic_direct_equivalence()),
        ("boundary tilt", boundary_tilt()),
        ("problem size", problem_size()),
        ("active-set economy", active_set_economy(&runs)),
        ("flow energy bound", flow_bound()),
        ("gradient oracle", gradient_oracle()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "criterion {:>2} {} {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
