//! Small problems with known optima.

use nalgebra::DVector;

use crate::problem::{ProblemDef, ScalarMap};

/// Floor used in place of a zero Lipschitz constant.
pub const LIPSCHITZ_FLOOR: f64 = 1e-6;

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

/// `min x₂  s.t.  ||x||² ≤ 1`; optimum `(0, -1)`, `f* = -1`.
pub fn ball_linear() -> ProblemDef {
    ProblemDef::from_maps(
        "ball-linear",
        2,
        ScalarMap::new(|x| x[1], |_| v2(0.0, 1.0)),
        vec![ScalarMap::new(|x| x.norm_squared() - 1.0, |x| 2.0 * x)],
    )
    .and_then(|p| p.with_lipschitz(LIPSCHITZ_FLOOR, vec![2.0]))
    .expect("static problem")
}

/// `min ||x - (2,2)||²` over the box `[-1, 1]²`; optimum `(1, 1)`, `f* = 2`.
pub fn box_qp() -> ProblemDef {
    let mut rows = Vec::with_capacity(4);
    for i in 0..2 {
        for sign in [1.0, -1.0] {
            rows.push(ScalarMap::new(
                move |x: &DVector<f64>| sign * x[i] - 1.0,
                move |_| {
                    let mut g = DVector::zeros(2);
                    g[i] = sign;
                    g
                },
            ));
        }
    }
    ProblemDef::from_maps(
        "box-qp",
        2,
        ScalarMap::new(|x| (x - v2(2.0, 2.0)).norm_squared(), |x| 2.0 * (x - v2(2.0, 2.0))),
        rows,
    )
    .and_then(|p| p.with_lipschitz(2.0, vec![LIPSCHITZ_FLOOR; 4]))
    .expect("static problem")
}

/// Rosenbrock over the disk `||x||² ≤ 2`. The unconstrained minimizer `(1, 1)` lies on the
/// boundary, so `f* = 0` there.
pub fn rosenbrock_ball() -> ProblemDef {
    ProblemDef::from_maps(
        "rosenbrock-ball",
        2,
        ScalarMap::new(rosenbrock, |x| {
            let (a, b) = (x[0], x[1]);
            v2(
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            )
        }),
        vec![ScalarMap::new(|x| x.norm_squared() - 2.0, |x| 2.0 * x)],
    )
    .expect("static problem")
}

fn rosenbrock(x: &DVector<f64>) -> f64 {
    let (a, b) = (x[0], x[1]);
    (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_linear_optimum() {
        let p = ball_linear();
        let x = v2(0.0, -1.0);
        assert_eq!(p.objective_value(&x).unwrap(), -1.0);
        let r = p.kkt_residual(&x, &DVector::from_element(1, 0.5)).unwrap();
        assert_eq!(r.max_component(), 0.0);
        assert_eq!(p.lipschitz_g(), Some(&[2.0][..]));
    }

    #[test]
    fn box_qp_optimum() {
        let p = box_qp();
        let x = v2(1.0, 1.0);
        assert_eq!(p.objective_value(&x).unwrap(), 2.0);
        assert!(p.check_feasibility(&x, 0.0).unwrap().feasible);
        // active upper bounds carry multiplier 2
        let lam = DVector::from_vec(vec![2.0, 0.0, 2.0, 0.0]);
        assert_eq!(p.kkt_residual(&x, &lam).unwrap().max_component(), 0.0);
    }

    #[test]
    fn rosenbrock_grid_oracle() {
        // 2001 x 2001 grid on [-2, 2]², spacing 0.002 so (1, 1) is a node
        let p = rosenbrock_ball();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=2000 {
            let a = -2.0 + 0.002 * i as f64;
            for j in 0..=2000 {
                let b = -2.0 + 0.002 * j as f64;
                if a * a + b * b > 2.0 + 1e-12 {
                    continue;
                }
                let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                if f < best.0 {
                    best = (f, a, b);
                }
            }
        }
        assert!(best.0 < 1e-20, "grid min {}", best.0);
        assert!((best.1 - 1.0).abs() < 1e-9 && (best.2 - 1.0).abs() < 1e-9);
        let x = v2(1.0, 1.0);
        assert_eq!(p.objective_value(&x).unwrap(), 0.0);
        let g = p.constraint_values(&x).unwrap();
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn analytic_gradients() {
        let x = v2(0.3, -0.7);
        for p in [ball_linear(), box_qp(), rosenbrock_ball()] {
            assert!(p.fd_gradient_check(&x, 1e-6).unwrap() < 1e-6, "{}", p.name());
        }
    }
}
