//! Reference computations shared by the integration tests. Nothing here calls the conic path.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ssqcqp_core::DirectionRequest;

/// Values `a_i'u + α g_i + w_i ||u||²` of the direction constraints.
pub fn qcqp_rows(req: &DirectionRequest, u: &DVector<f64>) -> DVector<f64> {
    let uu = u.norm_squared();
    DVector::from_fn(req.g_values.len(), |i, _| {
        req.g_gradients.row(i).transpose().dot(u) + req.alpha * req.g_values[i] + req.weights[i] * uu
    })
}

/// Solve `min ½||u + ∇f||²` subject to the quadratic rows directly: a log-barrier path started
/// at the strictly feasible `u = 0`, followed by Newton on the KKT equations of the rows the
/// barrier identifies as active. Requires every `g_i < 0`.
pub fn qcqp_oracle(req: &DirectionRequest) -> (DVector<f64>, DVector<f64>) {
    let n = req.grad_f.len();
    let m = req.g_values.len();
    assert!(req.g_values.iter().all(|&g| g < 0.0), "oracle needs a strictly feasible origin");
    let mut u = DVector::zeros(n);
    let mut t = 1.0;
    while t <= 1e10 {
        for _ in 0..100 {
            let c = qcqp_rows(req, &u);
            let mut grad = t * (&u + &req.grad_f);
            let mut hess = DMatrix::identity(n, n) * t;
            for i in 0..m {
                let d = req.g_gradients.row(i).transpose() + 2.0 * req.weights[i] * &u;
                let s = -c[i];
                grad += &d / s;
                hess += &d * d.transpose() / (s * s);
                hess += DMatrix::identity(n, n) * (2.0 * req.weights[i] / s);
            }
            let step = hess.cholesky().expect("barrier Hessian is PD").solve(&(-&grad));
            let decrement = -grad.dot(&step);
            if decrement < 1e-14 {
                break;
            }
            let phi = |v: &DVector<f64>| -> f64 {
                let c = qcqp_rows(req, v);
                if c.iter().any(|&ci| ci >= 0.0) {
                    return f64::INFINITY;
                }
                0.5 * t * (v + &req.grad_f).norm_squared() - c.iter().map(|&ci| (-ci).ln()).sum::<f64>()
            };
            let base = phi(&u);
            let mut s = 1.0;
            while phi(&(&u + s * &step)) > base - 0.25 * s * decrement && s > 1e-12 {
                s *= 0.5;
            }
            u += s * &step;
        }
        t *= 10.0;
    }
    let c = qcqp_rows(req, &u);
    let t_last = t / 10.0;
    let lambda_barrier = DVector::from_fn(m, |i, _| 1.0 / (t_last * -c[i]));
    let active: Vec<usize> = (0..m).filter(|&i| lambda_barrier[i] > -c[i]).collect();
    match kkt_newton(req, &u, &lambda_barrier, &active) {
        Some((u_p, lam_p)) => (u_p, lam_p),
        None => (u, lambda_barrier),
    }
}

/// Newton on `u + ∇f + Σ λ_i d_i(u) = 0`, `c_i(u) = 0` over `active`; accepted only if the
/// result is feasible with nonnegative multipliers.
fn kkt_newton(
    req: &DirectionRequest,
    u0: &DVector<f64>,
    lam0: &DVector<f64>,
    active: &[usize],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = u0.len();
    let k = active.len();
    if k > n {
        return None;
    }
    let mut u = u0.clone();
    let mut lam = DVector::from_iterator(k, active.iter().map(|&i| lam0[i]));
    for _ in 0..50 {
        let c = qcqp_rows(req, &u);
        let wl: f64 = active.iter().zip(lam.iter()).map(|(&i, l)| req.weights[i] * l).sum();
        let mut r = &u + &req.grad_f;
        let mut jac = DMatrix::zeros(n + k, n + k);
        for (j, &i) in active.iter().enumerate() {
            let d = req.g_gradients.row(i).transpose() + 2.0 * req.weights[i] * &u;
            r += lam[j] * &d;
            for p in 0..n {
                jac[(p, n + j)] = d[p];
                jac[(n + j, p)] = d[p];
            }
        }
        for p in 0..n {
            jac[(p, p)] = 1.0 + 2.0 * wl;
        }
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&r));
        for (j, &i) in active.iter().enumerate() {
            rhs[n + j] = -c[i];
        }
        let res = rhs.amax();
        if res < 1e-14 {
            break;
        }
        let step = jac.lu().solve(&rhs)?;
        u += step.rows(0, n);
        lam += step.rows(n, k);
    }
    let c = qcqp_rows(req, &u);
    if lam.iter().any(|&l| l < -1e-12) || c.iter().any(|&ci| ci > 1e-12) {
        return None;
    }
    let mut full = DVector::zeros(req.g_values.len());
    for (j, &i) in active.iter().enumerate() {
        full[i] = lam[j].max(0.0);
    }
    Some((u, full))
}

/// KKT residual of the direction problem at `(u, λ)`, max over all blocks.
pub fn oracle_kkt(req: &DirectionRequest, u: &DVector<f64>, lam: &DVector<f64>) -> f64 {
    let c = qcqp_rows(req, u);
    let mut r = u + &req.grad_f;
    for i in 0..lam.len() {
        r += lam[i] * (req.g_gradients.row(i).transpose() + 2.0 * req.weights[i] * u);
    }
    let primal = c.iter().fold(0.0_f64, |a, &v| a.max(v));
    let dual = lam.iter().fold(0.0_f64, |a, &v| a.max(-v));
    let comp = c.iter().zip(lam.iter()).fold(0.0_f64, |a, (&ci, &l)| a.max((ci * l).abs()));
    r.amax().max(primal).max(dual).max(comp)
}

/// Random direction problem with `n ≤ 10`, at most 20 rows and every `g_i < 0`.
pub fn random_request(rng: &mut ChaCha8Rng) -> DirectionRequest {
    let n = rng.gen_range(1..=10);
    let m = rng.gen_range(1..=20);
    DirectionRequest {
        grad_f: DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0)),
        g_values: DVector::from_fn(m, |_, _| -rng.gen_range(0.01..2.0)),
        g_gradients: DMatrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0)),
        active: (0..m).collect(),
        alpha: rng.gen_range(0.1..5.0),
        weights: DVector::from_fn(m, |_, _| rng.gen_range(0.01..2.0)),
    }
}
