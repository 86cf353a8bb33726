//! Multi-agent unicycle navigation with obstacle and inter-agent avoidance.
//!
//! States are eliminated by rolling the dynamics forward from fixed starts, so the decision
//! vector is the stacked input sequence
//! `U = [U(0), ..., U(N-1)]`, `U(t) = [v_1, w_1, ..., v_a, w_a]`. Gradients of the objective and
//! of every state-dependent constraint are accumulated backwards through the rollout.
//!
//! Constraint rows are laid out in four blocks:
//!
//! | block      | rows per (t, agent) | t range  |
//! |------------|---------------------|----------|
//! | input box  | 4                   | 0..N-1   |
//! | state box  | 6                   | 1..N     |
//! | obstacles  | one per obstacle    | 1..N     |
//! | pairwise   | one per pair, per t | 1..N     |

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

use super::dare::{solve_dare, DareError, DareInputs};
use crate::problem::{ProblemDef, ProblemError, SmoothModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NavError {
    #[error("invalid navigation parameters: {0}")]
    Invalid(String),
    #[error("input vector has length {actual}, expected {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error("terminal weight: {0}")]
    Dare(#[from] DareError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

pub const DEFAULT_COLLISION_RADIUS: f64 = 0.25;

const STARTS: [[f64; 3]; 4] = [
    [-2.0, -2.0, 0.0],
    [-3.0, -1.0, 0.0],
    [-3.0, -3.0, 0.0],
    [-1.0, -3.0, 0.0],
];

const GOALS: [[f64; 3]; 4] = [
    [2.0, 3.0, 0.0],
    [3.0, 2.0, 0.0],
    [2.0, 1.0, 0.0],
    [1.0, 2.0, 0.0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct NavigationParams {
    pub agents: usize,
    pub horizon: usize,
    /// Sample time `T`.
    pub sample_time: f64,
    /// Constant drift subtracted from `x` every step.
    pub dx_shift: f64,
    pub starts: Vec<[f64; 3]>,
    pub goals: Vec<[f64; 3]>,
    /// Desired steady-state input `(v, w)`.
    pub input_ref: [f64; 2],
    pub v_min: f64,
    pub v_max: f64,
    pub w_max: f64,
    pub xy_max: f64,
    pub theta_max: f64,
    pub obstacles: Vec<Obstacle>,
    /// Minimum allowed distance between two agents.
    pub collision_radius: f64,
    pub control_weight: f64,
    /// Terminal weight per agent.
    pub terminal_p: Vec<Matrix3<f64>>,
}

impl NavigationParams {
    /// Four-vehicle scenario (or its first `agents` vehicles) with three circular obstacles.
    /// Terminal weights come from the DARE of the dynamics linearized at each goal.
    pub fn standard(agents: usize, horizon: usize, collision_radius: f64) -> Result<Self, NavError> {
        if agents == 0 || agents > STARTS.len() {
            return Err(NavError::Invalid(format!(
                "agents must be between 1 and {}",
                STARTS.len()
            )));
        }
        let mut params = Self {
            agents,
            horizon,
            sample_time: 0.03,
            dx_shift: 0.03,
            starts: STARTS[..agents].to_vec(),
            goals: GOALS[..agents].to_vec(),
            input_ref: [1.0, 0.0],
            v_min: -5.0,
            v_max: 12.0,
            w_max: 1.5 * PI,
            xy_max: 3.7,
            theta_max: PI,
            obstacles: vec![
                Obstacle { center: [-1.0, -1.0], radius: 1.0 },
                Obstacle { center: [1.0, 0.0], radius: 0.5 },
                Obstacle { center: [0.0, 1.0], radius: 0.5 },
            ],
            collision_radius,
            control_weight: 0.01,
            terminal_p: Vec::new(),
        };
        params.terminal_p = (0..agents)
            .map(|i| {
                let p = solve_dare(&params.linearization(i), 1e-13, 10_000)?;
                Ok(Matrix3::from_fn(|r, c| p[(r, c)]))
            })
            .collect::<Result<_, NavError>>()?;
        params.validate()?;
        Ok(params)
    }

    /// Jacobians of the dynamics at `(goal, input_ref)` with `Q = I`, `R = 0.01 I`.
    pub fn linearization(&self, agent: usize) -> DareInputs {
        let t = self.sample_time;
        let [v, _] = self.input_ref;
        let theta = self.goals[agent][2];
        let (sn, cs) = theta.sin_cos();
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, -v * t * sn, 0.0, 1.0, v * t * cs, 0.0, 0.0, 1.0],
        );
        let b = DMatrix::from_row_slice(3, 2, &[t * cs, 0.0, t * sn, 0.0, 0.0, t]);
        DareInputs {
            a,
            b,
            q: DMatrix::identity(3, 3),
            r: DMatrix::identity(2, 2) * 0.01,
        }
    }

    pub fn validate(&self) -> Result<(), NavError> {
        let bad = |m: &str| Err(NavError::Invalid(m.to_string()));
        if self.agents == 0 || self.horizon == 0 {
            return bad("agents and horizon must be positive");
        }
        if self.starts.len() != self.agents
            || self.goals.len() != self.agents
            || self.terminal_p.len() != self.agents
        {
            return bad("starts, goals and terminal weights must have one entry per agent");
        }
        if self.obstacles.iter().any(|o| !(o.radius > 0.0)) {
            return bad("obstacle radii must be positive");
        }
        if !(self.collision_radius > 0.0) {
            return bad("collision radius must be positive");
        }
        for p in &self.terminal_p {
            if (p - p.transpose()).amax() > 1e-9 * p.amax().max(1.0) {
                return bad("terminal weight must be symmetric");
            }
            if p.cholesky().is_none() {
                return bad("terminal weight must be positive definite");
            }
        }
        Ok(())
    }

    pub fn num_variables(&self) -> usize {
        self.agents * 2 * self.horizon
    }

    fn num_pairs(&self) -> usize {
        self.agents * (self.agents - 1) / 2
    }

    /// Input, state, obstacle and pairwise constraint counts.
    pub fn constraint_blocks(&self) -> [usize; 4] {
        let per_step = self.agents * self.horizon;
        [
            4 * per_step,
            6 * per_step,
            self.obstacles.len() * per_step,
            self.num_pairs() * self.horizon,
        ]
    }

    pub fn num_constraints(&self) -> usize {
        self.constraint_blocks().iter().sum()
    }

    /// All inputs at the steady-state reference `(1, 0)`; the vehicles then hold their starts.
    pub fn reference_inputs(&self) -> DVector<f64> {
        DVector::from_fn(self.num_variables(), |k, _| self.input_ref[k % 2])
    }

    fn input_index(&self, t: usize, agent: usize) -> usize {
        (t * self.agents + agent) * 2
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.agents).flat_map(move |i| (i + 1..self.agents).map(move |j| (i, j)))
    }
}

/// States at `t = 0..=N`, indexed `[t * agents + agent]`.
struct Rollout {
    states: Vec<[f64; 3]>,
    agents: usize,
}

impl Rollout {
    fn new(params: &NavigationParams, u: &DVector<f64>) -> Self {
        let a = params.agents;
        let dt = params.sample_time;
        let mut states = Vec::with_capacity((params.horizon + 1) * a);
        states.extend_from_slice(&params.starts);
        for t in 0..params.horizon {
            for i in 0..a {
                let [x, y, th] = states[t * a + i];
                let k = params.input_index(t, i);
                let (v, w) = (u[k], u[k + 1]);
                let (sn, cs) = th.sin_cos();
                states.push([x + v * dt * cs - params.dx_shift, y + v * dt * sn, th + w * dt]);
            }
        }
        Self { states, agents: a }
    }

    fn state(&self, t: usize, agent: usize) -> [f64; 3] {
        self.states[t * self.agents + agent]
    }

    /// Propagate `seed = ∂φ/∂X_agent(t_end)` back to the inputs, adding into `grad`.
    fn backprop(
        &self,
        params: &NavigationParams,
        u: &DVector<f64>,
        agent: usize,
        t_end: usize,
        seed: [f64; 3],
        grad: &mut [f64],
    ) {
        let dt = params.sample_time;
        let [ax, ay, mut ath] = seed;
        for s in (0..t_end).rev() {
            let th = self.state(s, agent)[2];
            let k = params.input_index(s, agent);
            let v = u[k];
            let (sn, cs) = th.sin_cos();
            grad[k] += dt * (ax * cs + ay * sn);
            grad[k + 1] += dt * ath;
            ath += v * dt * (ay * cs - ax * sn);
        }
    }
}

/// Stacked states `X(1), ..., X(N)` produced by the inputs `u`.
pub fn unroll_dynamics(params: &NavigationParams, u: &DVector<f64>) -> Result<DVector<f64>, NavError> {
    if u.len() != params.num_variables() {
        return Err(NavError::Dimension {
            expected: params.num_variables(),
            actual: u.len(),
        });
    }
    let roll = Rollout::new(params, u);
    let a = params.agents;
    Ok(DVector::from_iterator(
        3 * a * params.horizon,
        roll.states[a..].iter().flat_map(|s| s.iter().copied()),
    ))
}

/// Distances between every pair of agents at `t = 1..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistances {
    pub agents: (usize, usize),
    pub distances: Vec<f64>,
}

pub fn pairwise_distances(
    params: &NavigationParams,
    u: &DVector<f64>,
) -> Result<Vec<PairDistances>, NavError> {
    if u.len() != params.num_variables() {
        return Err(NavError::Dimension {
            expected: params.num_variables(),
            actual: u.len(),
        });
    }
    let roll = Rollout::new(params, u);
    Ok(params
        .pairs()
        .map(|(i, j)| PairDistances {
            agents: (i, j),
            distances: (1..=params.horizon)
                .map(|t| {
                    let (p, q) = (roll.state(t, i), roll.state(t, j));
                    (p[0] - q[0]).hypot(p[1] - q[1])
                })
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Row {
    /// `sign * (u - bound) <= 0` on component `comp` (0 = v, 1 = w).
    Input { t: usize, agent: usize, comp: usize, upper: bool },
    /// Box on state component `comp` at time `t >= 1`.
    State { t: usize, agent: usize, comp: usize, upper: bool },
    Obstacle { t: usize, agent: usize, obstacle: usize },
    Pair { t: usize, i: usize, j: usize },
}

struct NavigationModel {
    params: NavigationParams,
    pair_list: Vec<(usize, usize)>,
}

impl NavigationModel {
    fn decode(&self, mut idx: usize) -> Row {
        let p = &self.params;
        let a = p.agents;
        let [n_in, n_st, n_ob, _] = p.constraint_blocks();
        if idx < n_in {
            let (step, r) = (idx / 4, idx % 4);
            return Row::Input {
                t: step / a,
                agent: step % a,
                comp: r / 2,
                upper: r % 2 == 0,
            };
        }
        idx -= n_in;
        if idx < n_st {
            let (step, r) = (idx / 6, idx % 6);
            return Row::State {
                t: step / a + 1,
                agent: step % a,
                comp: r / 2,
                upper: r % 2 == 0,
            };
        }
        idx -= n_st;
        if idx < n_ob {
            let nob = p.obstacles.len();
            let (step, o) = (idx / nob, idx % nob);
            return Row::Obstacle {
                t: step / a + 1,
                agent: step % a,
                obstacle: o,
            };
        }
        idx -= n_ob;
        let np = self.pair_list.len();
        let (i, j) = self.pair_list[idx % np];
        Row::Pair { t: idx / np + 1, i, j }
    }

    fn input_bounds(&self, comp: usize) -> (f64, f64) {
        let p = &self.params;
        if comp == 0 {
            (p.v_min, p.v_max)
        } else {
            (-p.w_max, p.w_max)
        }
    }

    fn state_bound(&self, comp: usize) -> f64 {
        if comp == 2 {
            self.params.theta_max
        } else {
            self.params.xy_max
        }
    }

    fn row_value(&self, row: Row, u: &DVector<f64>, roll: &Rollout) -> f64 {
        let p = &self.params;
        match row {
            Row::Input { t, agent, comp, upper } => {
                let val = u[p.input_index(t, agent) + comp];
                let (lo, hi) = self.input_bounds(comp);
                if upper {
                    val - hi
                } else {
                    lo - val
                }
            }
            Row::State { t, agent, comp, upper } => {
                let val = roll.state(t, agent)[comp];
                let bound = self.state_bound(comp);
                if upper {
                    val - bound
                } else {
                    -bound - val
                }
            }
            Row::Obstacle { t, agent, obstacle } => {
                let s = roll.state(t, agent);
                let o = &p.obstacles[obstacle];
                let (dx, dy) = (s[0] - o.center[0], s[1] - o.center[1]);
                o.radius * o.radius - dx * dx - dy * dy
            }
            Row::Pair { t, i, j } => {
                let (si, sj) = (roll.state(t, i), roll.state(t, j));
                let (dx, dy) = (si[0] - sj[0], si[1] - sj[1]);
                p.collision_radius * p.collision_radius - dx * dx - dy * dy
            }
        }
    }

    fn row_gradient(&self, row: Row, u: &DVector<f64>, roll: &Rollout, grad: &mut [f64]) {
        let p = &self.params;
        match row {
            Row::Input { t, agent, comp, upper } => {
                grad[p.input_index(t, agent) + comp] = if upper { 1.0 } else { -1.0 };
            }
            Row::State { t, agent, comp, upper } => {
                let mut seed = [0.0; 3];
                seed[comp] = if upper { 1.0 } else { -1.0 };
                roll.backprop(p, u, agent, t, seed, grad);
            }
            Row::Obstacle { t, agent, obstacle } => {
                let s = roll.state(t, agent);
                let o = &p.obstacles[obstacle];
                let seed = [-2.0 * (s[0] - o.center[0]), -2.0 * (s[1] - o.center[1]), 0.0];
                roll.backprop(p, u, agent, t, seed, grad);
            }
            Row::Pair { t, i, j } => {
                let (si, sj) = (roll.state(t, i), roll.state(t, j));
                let (dx, dy) = (si[0] - sj[0], si[1] - sj[1]);
                roll.backprop(p, u, i, t, [-2.0 * dx, -2.0 * dy, 0.0], grad);
                roll.backprop(p, u, j, t, [2.0 * dx, 2.0 * dy, 0.0], grad);
            }
        }
    }

    fn goal_error(&self, s: [f64; 3], agent: usize) -> Vector3<f64> {
        let g = self.params.goals[agent];
        Vector3::new(s[0] - g[0], s[1] - g[1], s[2] - g[2])
    }

    fn input_error(&self, u: &DVector<f64>, t: usize, agent: usize) -> [f64; 2] {
        let k = self.params.input_index(t, agent);
        [u[k] - self.params.input_ref[0], u[k + 1] - self.params.input_ref[1]]
    }
}

impl SmoothModel for NavigationModel {
    fn objective(&self, u: &DVector<f64>) -> f64 {
        let p = &self.params;
        let roll = Rollout::new(p, u);
        let mut total = 0.0;
        for i in 0..p.agents {
            for t in 0..p.horizon {
                let [ev, ew] = self.input_error(u, t, i);
                total += self.goal_error(roll.state(t, i), i).norm_squared()
                    + p.control_weight * (ev * ev + ew * ew);
            }
            let e = self.goal_error(roll.state(p.horizon, i), i);
            total += e.dot(&(p.terminal_p[i] * e));
        }
        total
    }

    fn objective_gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        self.objective_with_gradient(u).1
    }

    fn objective_with_gradient(&self, u: &DVector<f64>) -> (f64, DVector<f64>) {
        let p = &self.params;
        let dt = p.sample_time;
        let roll = Rollout::new(p, u);
        let mut grad = DVector::zeros(u.len());
        let mut total = 0.0;
        for i in 0..p.agents {
            let e = self.goal_error(roll.state(p.horizon, i), i);
            let pe = p.terminal_p[i] * e;
            total += e.dot(&pe);
            // adjoint of X_i(t+1) while processing step t
            let mut adj = 2.0 * pe;
            for t in (0..p.horizon).rev() {
                let s = roll.state(t, i);
                let k = p.input_index(t, i);
                let [ev, ew] = self.input_error(u, t, i);
                let stage = self.goal_error(s, i);
                total += stage.norm_squared() + p.control_weight * (ev * ev + ew * ew);

                let v = u[k];
                let (sn, cs) = s[2].sin_cos();
                grad[k] += dt * (adj[0] * cs + adj[1] * sn) + 2.0 * p.control_weight * ev;
                grad[k + 1] += dt * adj[2] + 2.0 * p.control_weight * ew;
                adj[2] += v * dt * (adj[1] * cs - adj[0] * sn);
                adj += 2.0 * stage;
            }
        }
        (total, grad)
    }

    fn constraint_values(&self, u: &DVector<f64>) -> DVector<f64> {
        let roll = Rollout::new(&self.params, u);
        let m = self.params.num_constraints();
        DVector::from_iterator(m, (0..m).map(|r| self.row_value(self.decode(r), u, &roll)))
    }

    fn constraint_gradients(&self, u: &DVector<f64>, subset: &[usize]) -> DMatrix<f64> {
        let roll = Rollout::new(&self.params, u);
        let n = u.len();
        // column-major storage, so fill the transpose row by row
        let mut jt = DMatrix::zeros(n, subset.len());
        for (r, &idx) in subset.iter().enumerate() {
            let mut col = jt.column_mut(r);
            let slice = col.as_mut_slice();
            self.row_gradient(self.decode(idx), u, &roll, slice);
        }
        jt.transpose()
    }
}

/// Problem over the stacked inputs with all four constraint blocks.
pub fn make_navigation_problem(params: &NavigationParams) -> Result<ProblemDef, NavError> {
    params.validate()?;
    let model = NavigationModel {
        pair_list: params.pairs().collect(),
        params: params.clone(),
    };
    let name = format!("nav-{}x{}", params.agents, params.horizon);
    Ok(ProblemDef::new(
        name,
        params.num_variables(),
        params.num_constraints(),
        model,
    )?)
}
