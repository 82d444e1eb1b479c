//! Damped Newton minimization of the smooth elastic-net criterion, either on
//! the full sample or on a weighted sketch.
//!
//! Both objectives are penalized weighted least squares,
//! `½Σ w_i (x_iᵀβ − y_i)² + λ[(1−η)/2‖β‖² + η‖β‖_α]`, with `w_i = 1` for the
//! full data and `w_c = 1/(C·π̃_c)` for a sketch. The weighted Gram matrix is
//! β-independent and formed once per solve, so each iteration costs one pass
//! over the rows for the gradient plus a p×p Cholesky factorization.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};
use crate::model::{self, Coefficients, Dataset, HyperParams, Role, SketchSample};

/// Gradient stopping threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum GradTol {
    Absolute(f64),
    /// `factor · (1 + ‖∇L(init)‖∞)`.
    RelativeToInit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damping {
    None,
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub grad_tol: GradTol,
    pub step_tol: f64,
    pub max_iter: usize,
    pub damping: Damping,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { grad_tol: GradTol::RelativeToInit(1e-8), step_tol: 1e-10, max_iter: 100, damping: Damping::Backtracking }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let g = match self.grad_tol {
            GradTol::Absolute(v) | GradTol::RelativeToInit(v) => v,
        };
        if !(g > 0.0) || !(self.step_tol > 0.0) {
            return Err(Error::invalid("newton tolerances must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("newton max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub beta: Coefficients,
    /// Number of Newton updates applied (T).
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_norm: f64,
    /// Gradient threshold actually used.
    pub grad_tol: f64,
    pub last_step: f64,
    /// Objective value at the initial point and after every update.
    pub objective_trace: Vec<f64>,
}

/// Smooth, strictly convex objective with explicit derivatives.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, beta: ArrayView1<f64>) -> f64;
    fn gradient(&self, beta: ArrayView1<f64>) -> Array1<f64>;
    fn hessian(&self, beta: ArrayView1<f64>) -> Array2<f64>;
}

/// Penalized weighted least squares over borrowed rows.
pub struct PenalizedLeastSquares<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    weights: Option<Array1<f64>>,
    gram: Array2<f64>,
    hp: HyperParams,
}

impl<'a> PenalizedLeastSquares<'a> {
    pub fn full(data: &'a Dataset, hp: &HyperParams) -> Self {
        Self { x: data.x(), y: data.y(), weights: None, gram: linalg::gram(data.x()), hp: *hp }
    }

    /// Full-data objective with a precomputed `XᵀX`.
    pub fn full_with_gram(data: &'a Dataset, gram: Array2<f64>, hp: &HyperParams) -> Self {
        Self { x: data.x(), y: data.y(), weights: None, gram, hp: *hp }
    }

    pub fn sketch(sketch: &'a SketchSample, hp: &HyperParams) -> Self {
        let w = sketch.weights();
        let gram = linalg::weighted_gram(sketch.x(), w.view());
        Self { x: sketch.x(), y: sketch.y(), weights: Some(w), gram, hp: *hp }
    }

    fn weighted_residuals(&self, beta: ArrayView1<f64>) -> Array1<f64> {
        let r = self.x.dot(&beta) - self.y;
        match &self.weights {
            Some(w) => r * w,
            None => r,
        }
    }
}

impl Objective for PenalizedLeastSquares<'_> {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, beta: ArrayView1<f64>) -> f64 {
        let r = self.x.dot(&beta) - self.y;
        let data = match &self.weights {
            Some(w) => r.iter().zip(w.iter()).map(|(r, w)| w * r * r).sum::<f64>(),
            None => r.dot(&r),
        };
        0.5 * data + model::smooth_penalty(beta, &self.hp)
    }

    fn gradient(&self, beta: ArrayView1<f64>) -> Array1<f64> {
        self.x.t().dot(&self.weighted_residuals(beta)) + model::smooth_penalty_grad(beta, &self.hp)
    }

    fn hessian(&self, beta: ArrayView1<f64>) -> Array2<f64> {
        let mut h = self.gram.clone();
        model::add_smooth_penalty_hess(&mut h, beta, &self.hp);
        h
    }
}

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK_FACTOR: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// Runs Newton's method on `obj` from `init`.
pub fn minimize<O: Objective>(obj: &O, init: ArrayView1<f64>, cfg: &NewtonConfig, role: Role) -> Result<NewtonReport> {
    cfg.validate()?;
    if init.len() != obj.dim() {
        return Err(Error::invalid(format!("initial point has length {}, expected {}", init.len(), obj.dim())));
    }
    let mut beta = init.to_owned();
    let mut grad = obj.gradient(beta.view());
    let mut grad_norm = linalg::max_abs(grad.view());
    let tol = match cfg.grad_tol {
        GradTol::Absolute(v) => v,
        GradTol::RelativeToInit(f) => f * (1.0 + grad_norm),
    };
    let mut f = obj.value(beta.view());
    let mut trace = vec![f];
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = grad_norm <= tol;

    while !converged && iterations < cfg.max_iter {
        if !grad_norm.is_finite() {
            return Err(Error::numerical("gradient became non-finite during Newton iterations"));
        }
        let h = obj.hessian(beta.view());
        let chol = Cholesky::factor(&h)
            .map_err(|e| Error::numerical(format!("Hessian factorization failed at iteration {iterations}: {e}")))?;
        let dir = -chol.solve(grad.view());
        let slope = grad.dot(&dir);

        let mut t = 1.0;
        let mut candidate = &beta + &dir;
        let mut f_new = obj.value(candidate.view());
        if cfg.damping == Damping::Backtracking {
            // Slack of a few ulps of |f| so that rounding near the optimum does
            // not trigger spurious backtracking.
            let slack = 8.0 * f64::EPSILON * f.abs().max(1.0);
            let mut tries = 0;
            while !(f_new <= f + ARMIJO_C * t * slope + slack) && tries < MAX_BACKTRACKS {
                t *= BACKTRACK_FACTOR;
                candidate = &beta + &(&dir * t);
                f_new = obj.value(candidate.view());
                tries += 1;
            }
            if !(f_new <= f + slack) {
                return Err(Error::numerical(format!(
                    "line search failed to decrease the objective at iteration {iterations}"
                )));
            }
        }
        last_step = t * dir.dot(&dir).sqrt();
        beta = candidate;
        f = f_new;
        trace.push(f);
        grad = obj.gradient(beta.view());
        grad_norm = linalg::max_abs(grad.view());
        iterations += 1;
        converged = grad_norm <= tol || last_step <= cfg.step_tol;
    }

    Ok(NewtonReport {
        beta: Coefficients::new(beta, role)?,
        iterations,
        converged,
        final_grad_norm: grad_norm,
        grad_tol: tol,
        last_step,
        objective_trace: trace,
    })
}

/// Minimizes the full-data smooth criterion.
pub fn solve_full(data: &Dataset, hp: &HyperParams, init: &Coefficients, cfg: &NewtonConfig) -> Result<NewtonReport> {
    hp.validate()?;
    let obj = PenalizedLeastSquares::full(data, hp);
    minimize(&obj, init.view(), cfg, Role::FullSmooth)
}

/// Minimizes the inverse-probability-weighted sketch criterion.
pub fn solve_sketch(
    sketch: &SketchSample,
    hp: &HyperParams,
    init: &Coefficients,
    cfg: &NewtonConfig,
) -> Result<NewtonReport> {
    hp.validate()?;
    let obj = PenalizedLeastSquares::sketch(sketch, hp);
    minimize(&obj, init.view(), cfg, Role::Subsample)
}
