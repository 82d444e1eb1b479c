//! Datasets, hyper-parameters and the closed-form criterion mathematics.
//!
//! The exact elastic-net criterion is
//!
//! ```text
//! L(β)   = ½‖Y − Xβ‖² + λ[(1−η)/2·‖β‖² + η‖β‖₁]
//! ```
//!
//! and its smooth counterpart `L_α` replaces `‖β‖₁` by `Σ_j |β_j|_α`, where
//! `|x|_α = (1/α)[log(1+e^{−αx}) + log(1+e^{αx})]`. All α-absolute terms are
//! evaluated in overflow-free forms:
//!
//! ```text
//! |x|_α   = |x| + (2/α)·log1p(e^{−α|x|})
//! ∇|x|_α  = tanh(αx/2)
//! ∇²|x|_α = 2α·e^{−α|x|} / (1 + e^{−α|x|})²
//! ```

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Full sample: design matrix `x` (N×p, row-major) and responses `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid(format!(
                "dataset must have at least one row and one column (got {}x{})",
                x.nrows(),
                x.ncols()
            )));
        }
        if let Some(((i, j), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite covariate {v} at row {i}, column {j}")));
        }
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite response {v} at row {i}")));
        }
        let x = if x.is_standard_layout() { x } else { x.as_standard_layout().to_owned() };
        Ok(Self { x, y })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows selected by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset { x: self.x.select(Axis(0), indices), y: self.y.select(Axis(0), indices) }
    }

    /// `Xβ − Y`.
    pub fn residuals(&self, beta: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim(self.p(), beta.len())?;
        Ok(self.x.dot(&beta) - &self.y)
    }

    pub fn into_parts(self) -> (Array2<f64>, Array1<f64>) {
        (self.x, self.y)
    }
}

/// `(λ, η, α)`: penalty strength, L1/L2 mix and smoothing level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lambda: f64,
    pub eta: f64,
    pub alpha: f64,
}

impl HyperParams {
    pub fn new(lambda: f64, eta: f64, alpha: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid(format!("eta must lie strictly inside (0, 1), got {eta}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be positive and finite, got {alpha}")));
        }
        Ok(Self { lambda, eta, alpha })
    }

    /// Weight of the ridge term, `λ(1−η)`.
    pub fn ridge_weight(&self) -> f64 {
        self.lambda * (1.0 - self.eta)
    }

    /// Weight of the (smoothed) L1 term, `λη`.
    pub fn l1_weight(&self) -> f64 {
        self.lambda * self.eta
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.lambda, self.eta, self.alpha).map(|_| ())
    }
}

/// What a coefficient vector stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    True,
    FullSmooth,
    FullExact,
    Pilot,
    Subsample,
    TwoStep,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::True => "true",
            Role::FullSmooth => "full_smooth",
            Role::FullExact => "full_exact",
            Role::Pilot => "pilot",
            Role::Subsample => "subsample",
            Role::TwoStep => "two_step",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub beta: Array1<f64>,
    pub role: Role,
}

impl Coefficients {
    pub fn new(beta: Array1<f64>, role: Role) -> Result<Self> {
        if let Some((j, v)) = beta.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite coefficient {v} at index {j}")));
        }
        Ok(Self { beta, role })
    }

    pub fn zeros(p: usize, role: Role) -> Self {
        Self { beta: Array1::zeros(p), role }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.beta.view()
    }
}

/// Weighted subsample: verbatim copies of drawn rows plus the sampling
/// probability each was drawn with.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchSample {
    x: Array2<f64>,
    y: Array1<f64>,
    probs: Array1<f64>,
    indices: Vec<usize>,
    source_n: usize,
}

impl SketchSample {
    /// Builds a sketch from `indices` into `data`, with `probs[c]` the
    /// probability row `indices[c]` was drawn with.
    pub fn from_indices(data: &Dataset, indices: Vec<usize>, probs: Array1<f64>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("sketch must contain at least one row"));
        }
        if indices.len() != probs.len() {
            return Err(Error::invalid("sketch indices and probabilities differ in length"));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= data.n()) {
            return Err(Error::invalid(format!("sketch index {i} out of range for N = {}", data.n())));
        }
        check_probs(probs.view())?;
        Ok(Self {
            x: data.x.select(Axis(0), &indices),
            y: data.y.select(Axis(0), &indices),
            probs,
            indices,
            source_n: data.n(),
        })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn probs(&self) -> ArrayView1<'_, f64> {
        self.probs.view()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Subsample size C.
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn source_n(&self) -> usize {
        self.source_n
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Data-term weights `1 / (C·π̃_c)`.
    pub fn weights(&self) -> Array1<f64> {
        let c = self.size() as f64;
        self.probs.mapv(|p| 1.0 / (c * p))
    }
}

fn check_probs(probs: ArrayView1<f64>) -> Result<()> {
    if let Some((c, p)) = probs.iter().enumerate().find(|(_, p)| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!("sketch probability {p} at position {c} must be positive")));
    }
    Ok(())
}

fn check_dim(p: usize, got: usize) -> Result<()> {
    if p != got {
        return Err(Error::invalid(format!("coefficient length {got} does not match p = {p}")));
    }
    Ok(())
}

fn check_scalar(x: f64, alpha: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("argument must be finite, got {x}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be positive and finite, got {alpha}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn abs_alpha(x: f64, alpha: f64) -> f64 {
    let ax = x.abs();
    ax + (2.0 / alpha) * (-alpha * ax).exp().ln_1p()
}

#[inline]
pub(crate) fn abs_alpha_grad(x: f64, alpha: f64) -> f64 {
    (0.5 * alpha * x).tanh()
}

#[inline]
pub(crate) fn abs_alpha_hess(x: f64, alpha: f64) -> f64 {
    let e = (-alpha * x.abs()).exp();
    let h = 2.0 * alpha * e / ((1.0 + e) * (1.0 + e));
    h.max(f64::MIN_POSITIVE)
}

/// α-absolute function `|x|_α`.
pub fn alpha_abs(x: f64, alpha: f64) -> Result<f64> {
    check_scalar(x, alpha)?;
    Ok(abs_alpha(x, alpha))
}

/// First derivative of `|x|_α`; equals `tanh(αx/2)`.
pub fn alpha_abs_grad(x: f64, alpha: f64) -> Result<f64> {
    check_scalar(x, alpha)?;
    Ok(abs_alpha_grad(x, alpha))
}

/// Second derivative of `|x|_α`. Always strictly positive.
pub fn alpha_abs_hess(x: f64, alpha: f64) -> Result<f64> {
    check_scalar(x, alpha)?;
    Ok(abs_alpha_hess(x, alpha))
}

/// `‖β‖_α = Σ_j |β_j|_α`.
pub fn smooth_norm(beta: ArrayView1<f64>, alpha: f64) -> Result<f64> {
    check_scalar(0.0, alpha)?;
    if let Some(v) = beta.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite coefficient {v}")));
    }
    Ok(beta.iter().map(|&b| abs_alpha(b, alpha)).sum())
}

/// Penalty value `λ[(1−η)/2·‖β‖² + η‖β‖_α]`.
pub(crate) fn smooth_penalty(beta: ArrayView1<f64>, hp: &HyperParams) -> f64 {
    let sq = beta.dot(&beta);
    let l1: f64 = beta.iter().map(|&b| abs_alpha(b, hp.alpha)).sum();
    0.5 * hp.ridge_weight() * sq + hp.l1_weight() * l1
}

pub(crate) fn smooth_penalty_grad(beta: ArrayView1<f64>, hp: &HyperParams) -> Array1<f64> {
    beta.mapv(|b| hp.ridge_weight() * b + hp.l1_weight() * abs_alpha_grad(b, hp.alpha))
}

/// Adds the penalty Hessian `λ(1−η)I + λη·H(α,β)` onto `h` in place.
pub(crate) fn add_smooth_penalty_hess(h: &mut Array2<f64>, beta: ArrayView1<f64>, hp: &HyperParams) {
    for (j, &b) in beta.iter().enumerate() {
        h[[j, j]] += hp.ridge_weight() + hp.l1_weight() * abs_alpha_hess(b, hp.alpha);
    }
}

/// `g(α, β)`: the elementwise α-absolute gradient.
pub fn alpha_abs_grad_vec(beta: ArrayView1<f64>, alpha: f64) -> Array1<f64> {
    beta.mapv(|b| abs_alpha_grad(b, alpha))
}

/// Exact elastic-net criterion `½‖Y−Xβ‖² + λ[(1−η)/2‖β‖² + η‖β‖₁]`.
pub fn criterion_exact(data: &Dataset, beta: ArrayView1<f64>, hp: &HyperParams) -> Result<f64> {
    hp.validate()?;
    let r = data.residuals(beta)?;
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    Ok(0.5 * r.dot(&r) + 0.5 * hp.ridge_weight() * beta.dot(&beta) + hp.l1_weight() * l1)
}

/// Smooth elastic-net criterion `L_α`.
pub fn criterion_smooth(data: &Dataset, beta: ArrayView1<f64>, hp: &HyperParams) -> Result<f64> {
    hp.validate()?;
    let r = data.residuals(beta)?;
    Ok(0.5 * r.dot(&r) + smooth_penalty(beta, hp))
}

/// `Σ_n (βᵀx_n − y_n)x_n + λ(1−η)β + λη·g(α,β)`.
pub fn gradient_smooth(data: &Dataset, beta: ArrayView1<f64>, hp: &HyperParams) -> Result<Array1<f64>> {
    hp.validate()?;
    let r = data.residuals(beta)?;
    Ok(data.x.t().dot(&r) + smooth_penalty_grad(beta, hp))
}

/// `Σ_n x_n x_nᵀ + λ(1−η)I + λη·H(α,β)`.
pub fn hessian_smooth(data: &Dataset, beta: ArrayView1<f64>, hp: &HyperParams) -> Result<Array2<f64>> {
    hp.validate()?;
    check_dim(data.p(), beta.len())?;
    let mut h = linalg::gram(data.x());
    add_smooth_penalty_hess(&mut h, beta, hp);
    Ok(h)
}

/// `(1/2C)Σ_c (1/π̃_c)(x̃_cᵀβ − ỹ_c)² + (λ/2)(1−η)‖β‖² + λη‖β‖_α`.
///
/// Only the residual sum carries inverse-probability weights; the penalty is
/// identical to the full-data one.
pub fn sketch_criterion(sketch: &SketchSample, beta: ArrayView1<f64>, hp: &HyperParams) -> Result<f64> {
    hp.validate()?;
    check_dim(sketch.p(), beta.len())?;
    let r = sketch.x.dot(&beta) - &sketch.y;
    let w = sketch.weights();
    let data: f64 = r.iter().zip(w.iter()).map(|(r, w)| w * r * r).sum();
    Ok(0.5 * data + smooth_penalty(beta, hp))
}

pub fn sketch_gradient(sketch: &SketchSample, beta: ArrayView1<f64>, hp: &HyperParams) -> Result<Array1<f64>> {
    hp.validate()?;
    check_dim(sketch.p(), beta.len())?;
    let r = (sketch.x.dot(&beta) - &sketch.y) * &sketch.weights();
    Ok(sketch.x.t().dot(&r) + smooth_penalty_grad(beta, hp))
}

pub fn sketch_hessian(sketch: &SketchSample, beta: ArrayView1<f64>, hp: &HyperParams) -> Result<Array2<f64>> {
    hp.validate()?;
    check_dim(sketch.p(), beta.len())?;
    let mut h = linalg::weighted_gram(sketch.x(), sketch.weights().view());
    add_smooth_penalty_hess(&mut h, beta, hp);
    Ok(h)
}
