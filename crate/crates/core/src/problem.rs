//! Smooth inequality-constrained programs
//!
//! ```text
//!     minimize    f(x)
//!     subject to  g_i(x) <= 0,   i = 1..m
//! ```
//!
//! A [`ProblemDef`] owns an immutable [`SmoothModel`] that evaluates `f`, `g` and their
//! gradients. Everything here is read-only once built, so a definition can be shared across
//! threads freely.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("constraint index {index} out of range for m = {m}")]
    IndexOutOfRange { index: usize, m: usize },
    #[error("non-finite {what} encountered; the problem instance is ill-posed at this point")]
    NonFinite { what: &'static str },
    #[error("invalid problem definition: {0}")]
    Invalid(String),
}

/// Oracle access to the objective and constraint functions.
///
/// Implementations must be pure: repeated calls with the same argument return the same value.
pub trait SmoothModel: Send + Sync {
    fn objective(&self, x: &DVector<f64>) -> f64;

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    fn objective_with_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.objective(x), self.objective_gradient(x))
    }

    /// All `m` constraint values.
    fn constraint_values(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Gradients of the constraints listed in `subset`, one row per index.
    fn constraint_gradients(&self, x: &DVector<f64>, subset: &[usize]) -> DMatrix<f64>;
}

type ValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A scalar function paired with its analytic gradient.
#[derive(Clone)]
pub struct ScalarMap {
    value: ValueFn,
    gradient: GradFn,
}

impl ScalarMap {
    pub fn new(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }
}

/// A model assembled from independent closures, one per function.
pub struct FnModel {
    objective: ScalarMap,
    constraints: Vec<ScalarMap>,
}

impl SmoothModel for FnModel {
    fn objective(&self, x: &DVector<f64>) -> f64 {
        self.objective.value(x)
    }

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.objective.gradient(x)
    }

    fn constraint_values(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints.iter().map(|g| g.value(x)),
        )
    }

    fn constraint_gradients(&self, x: &DVector<f64>, subset: &[usize]) -> DMatrix<f64> {
        let mut rows = DMatrix::zeros(subset.len(), x.len());
        for (r, &i) in subset.iter().enumerate() {
            rows.set_row(r, &self.constraints[i].gradient(x).transpose());
        }
        rows
    }
}

/// A problem instance: dimensions, oracle, and optional smoothness constants.
#[derive(Clone)]
pub struct ProblemDef {
    name: String,
    n: usize,
    m: usize,
    model: Arc<dyn SmoothModel>,
    lipschitz_f: Option<f64>,
    lipschitz_g: Option<Vec<f64>>,
}

impl fmt::Debug for ProblemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDef")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("lipschitz_f", &self.lipschitz_f)
            .field("lipschitz_g", &self.lipschitz_g)
            .finish_non_exhaustive()
    }
}

impl ProblemDef {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        model: impl SmoothModel + 'static,
    ) -> Result<Self, ProblemError> {
        if n == 0 {
            return Err(ProblemError::Invalid("decision dimension must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            n,
            m,
            model: Arc::new(model),
            lipschitz_f: None,
            lipschitz_g: None,
        })
    }

    pub fn from_maps(
        name: impl Into<String>,
        n: usize,
        objective: ScalarMap,
        constraints: Vec<ScalarMap>,
    ) -> Result<Self, ProblemError> {
        let m = constraints.len();
        Self::new(name, n, m, FnModel { objective, constraints })
    }

    /// Attach smoothness constants `L_f` and `L_i`; all must be strictly positive.
    pub fn with_lipschitz(mut self, lf: f64, lg: Vec<f64>) -> Result<Self, ProblemError> {
        if lg.len() != self.m {
            return Err(ProblemError::DimensionMismatch {
                expected: self.m,
                actual: lg.len(),
            });
        }
        if !(lf > 0.0 && lf.is_finite()) || lg.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(ProblemError::Invalid(
                "Lipschitz constants must be finite and strictly positive".into(),
            ));
        }
        self.lipschitz_f = Some(lf);
        self.lipschitz_g = Some(lg);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn lipschitz_f(&self) -> Option<f64> {
        self.lipschitz_f
    }

    pub fn lipschitz_g(&self) -> Option<&[f64]> {
        self.lipschitz_g.as_deref()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), ProblemError> {
        if x.len() != self.n {
            return Err(ProblemError::DimensionMismatch {
                expected: self.n,
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> Result<f64, ProblemError> {
        self.check_dim(x)?;
        let f = self.model.objective(x);
        if !f.is_finite() {
            return Err(ProblemError::NonFinite { what: "objective value" });
        }
        Ok(f)
    }

    /// `(f(x), ∇f(x))`.
    pub fn eval_objective(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>), ProblemError> {
        self.check_dim(x)?;
        let (f, grad) = self.model.objective_with_gradient(x);
        if !f.is_finite() {
            return Err(ProblemError::NonFinite { what: "objective value" });
        }
        if grad.len() != self.n {
            return Err(ProblemError::DimensionMismatch {
                expected: self.n,
                actual: grad.len(),
            });
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite { what: "objective gradient" });
        }
        Ok((f, grad))
    }

    /// All `m` constraint values.
    pub fn constraint_values(&self, x: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        self.check_dim(x)?;
        let g = self.model.constraint_values(x);
        if g.len() != self.m {
            return Err(ProblemError::DimensionMismatch {
                expected: self.m,
                actual: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite { what: "constraint value" });
        }
        Ok(g)
    }

    /// Gradient rows for the constraints in `subset`.
    pub fn constraint_gradients(
        &self,
        x: &DVector<f64>,
        subset: &[usize],
    ) -> Result<DMatrix<f64>, ProblemError> {
        self.check_dim(x)?;
        if let Some(&index) = subset.iter().find(|&&i| i >= self.m) {
            return Err(ProblemError::IndexOutOfRange { index, m: self.m });
        }
        let jac = self.model.constraint_gradients(x, subset);
        if jac.nrows() != subset.len() || jac.ncols() != self.n {
            return Err(ProblemError::DimensionMismatch {
                expected: self.n,
                actual: jac.ncols(),
            });
        }
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite { what: "constraint gradient" });
        }
        Ok(jac)
    }

    /// Values and gradient rows of the constraints in `subset`, in subset order.
    pub fn eval_constraints(
        &self,
        x: &DVector<f64>,
        subset: &[usize],
    ) -> Result<(DVector<f64>, DMatrix<f64>), ProblemError> {
        let jac = self.constraint_gradients(x, subset)?;
        let all = self.constraint_values(x)?;
        let values = DVector::from_iterator(subset.len(), subset.iter().map(|&i| all[i]));
        Ok((values, jac))
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.m).collect()
    }

    pub fn check_feasibility(
        &self,
        x: &DVector<f64>,
        feas_tol: f64,
    ) -> Result<FeasibilityReport, ProblemError> {
        let values = self.constraint_values(x)?;
        Ok(FeasibilityReport::new(values, feas_tol))
    }

    /// Residuals of the first-order optimality conditions at `(x, λ)`.
    pub fn kkt_residual(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> Result<KktResidual, ProblemError> {
        if lambda.len() != self.m {
            return Err(ProblemError::DimensionMismatch {
                expected: self.m,
                actual: lambda.len(),
            });
        }
        let (_, grad_f) = self.eval_objective(x)?;
        let (g, jac) = self.eval_constraints(x, &self.all_indices())?;
        let stationarity = (grad_f + jac.transpose() * lambda).norm();
        let primal = g.iter().fold(0.0_f64, |acc, &gi| acc.max(gi));
        let dual = lambda.iter().fold(0.0_f64, |acc, &l| acc.max(-l));
        let complementarity = g
            .iter()
            .zip(lambda.iter())
            .fold(0.0_f64, |acc, (&gi, &l)| acc.max((l * gi).abs()));
        Ok(KktResidual {
            stationarity,
            primal,
            dual,
            complementarity,
        })
    }

    /// Largest deviation between the analytic gradients (objective and every constraint) and
    /// central differences with step `h`.
    pub fn fd_gradient_check(&self, x: &DVector<f64>, h: f64) -> Result<f64, ProblemError> {
        if !(h > 0.0) {
            return Err(ProblemError::Invalid("finite-difference step must be positive".into()));
        }
        let (_, grad_f) = self.eval_objective(x)?;
        let jac = self.constraint_gradients(x, &self.all_indices())?;
        let mut worst = 0.0_f64;
        let mut probe = x.clone();
        for j in 0..self.n {
            probe[j] = x[j] + h;
            let f_plus = self.objective_value(&probe)?;
            let g_plus = self.constraint_values(&probe)?;
            probe[j] = x[j] - h;
            let f_minus = self.objective_value(&probe)?;
            let g_minus = self.constraint_values(&probe)?;
            probe[j] = x[j];

            worst = worst.max(((f_plus - f_minus) / (2.0 * h) - grad_f[j]).abs());
            for i in 0..self.m {
                let fd = (g_plus[i] - g_minus[i]) / (2.0 * h);
                worst = worst.max((fd - jac[(i, j)]).abs());
            }
        }
        Ok(worst)
    }
}

/// A decision vector with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(DVector<f64>);

impl Point {
    pub fn new(coords: DVector<f64>) -> Result<Self, ProblemError> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite { what: "point coordinate" });
        }
        Ok(Self(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self, ProblemError> {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub values: DVector<f64>,
    /// `max_i g_i(x)`; `-inf` when there are no constraints.
    pub max_violation: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn new(values: DVector<f64>, feas_tol: f64) -> Self {
        let max_violation = max_entry(&values);
        Self {
            feasible: max_violation <= feas_tol,
            values,
            max_violation,
        }
    }
}

pub(crate) fn max_entry(v: &DVector<f64>) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// The four first-order optimality residuals; all are nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResidual {
    /// `‖∇f + Σ λ_i ∇g_i‖₂`
    pub stationarity: f64,
    /// `max_i max(g_i, 0)`
    pub primal: f64,
    /// `max_i max(-λ_i, 0)`
    pub dual: f64,
    /// `max_i |λ_i g_i|`
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max_component(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}
