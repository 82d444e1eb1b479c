//! Sandwich-variance quantities for subsampled estimators.
//!
//! With residuals `r_n = βᵀx_n − y_n` at a reference β:
//!
//! ```text
//! M_X   = (1/N)·∇²L_α(β)
//! C_osa = λ(1−η)β + λη·g(α, β)
//! V₀    = (1/(CN²))[Σ π_n⁻¹ r_n² x_n x_nᵀ + C_osa C_osaᵀ + Σ r_n (C_osa x_nᵀ + x_n C_osaᵀ)]
//! V     = M_X⁻¹ V₀ M_X⁻¹
//! ```

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};
use crate::model::{self, Coefficients, Dataset, HyperParams};
use crate::ssp::{self, GramCache, SamplingPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticDiagnostics {
    pub m_x: Array2<f64>,
    pub c_osa: Array1<f64>,
    pub v0: Array2<f64>,
    pub v: Array2<f64>,
    pub trace_v: f64,
}

pub(crate) fn mx_from_gram(gram: &Array2<f64>, n: usize, beta_ref: ArrayView1<f64>, hp: &HyperParams) -> Result<Array2<f64>> {
    hp.validate()?;
    if beta_ref.len() != gram.nrows() {
        return Err(Error::invalid(format!(
            "reference coefficients have length {}, expected {}",
            beta_ref.len(),
            gram.nrows()
        )));
    }
    let mut h = gram.clone();
    model::add_smooth_penalty_hess(&mut h, beta_ref, hp);
    Ok(h / n as f64)
}

/// `M_X = (1/N)·hessian_smooth(data, β, hp)`.
pub fn compute_mx(data: &Dataset, beta_ref: ArrayView1<f64>, hp: &HyperParams) -> Result<Array2<f64>> {
    let mx = model::hessian_smooth(data, beta_ref, hp)? / data.n() as f64;
    Cholesky::factor(&mx).map_err(|e| Error::numerical(format!("M_X is not positive definite: {e}")))?;
    Ok(mx)
}

/// `C_osa = λ(1−η)β + λη·g(α, β)`.
pub fn compute_c_osa(beta_ref: ArrayView1<f64>, hp: &HyperParams) -> Result<Array1<f64>> {
    hp.validate()?;
    if let Some(v) = beta_ref.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite coefficient {v}")));
    }
    Ok(model::smooth_penalty_grad(beta_ref, hp))
}

/// Terms of V₀ that do not involve the sampling plan:
/// `C_osa C_osaᵀ + Σ r_n (C_osa x_nᵀ + x_n C_osaᵀ)`.
fn plan_free_terms(data: &Dataset, residuals: &Array1<f64>, c_osa: &Array1<f64>) -> Array2<f64> {
    let s = data.x().t().dot(residuals);
    let c = c_osa.view().insert_axis(Axis(1));
    let s = s.view().insert_axis(Axis(1));
    c.dot(&c.t()) + c.dot(&s.t()) + s.dot(&c.t())
}

/// Evaluates V₀ for `plan` and subsample size `c`.
pub fn compute_v0(
    data: &Dataset,
    plan: &SamplingPlan,
    beta_ref: ArrayView1<f64>,
    hp: &HyperParams,
    c: usize,
) -> Result<Array2<f64>> {
    if plan.len() != data.n() {
        return Err(Error::invalid(format!("plan covers {} rows but dataset has {}", plan.len(), data.n())));
    }
    if c == 0 {
        return Err(Error::invalid("subsample size must be at least 1"));
    }
    let residuals = data.residuals(beta_ref)?;
    let c_osa = compute_c_osa(beta_ref, hp)?;
    let mut weights = Array1::<f64>::zeros(data.n());
    for (n, (&r, &p)) in residuals.iter().zip(plan.probs().iter()).enumerate() {
        if p > 0.0 {
            weights[n] = r * r / p;
        } else if r != 0.0 {
            return Err(Error::invalid(format!(
                "row {n} has zero sampling probability but nonzero residual {r}"
            )));
        }
    }
    let sum = linalg::weighted_gram(data.x(), weights.view()) + plan_free_terms(data, &residuals, &c_osa);
    let nn = data.n() as f64;
    Ok(linalg::symmetrize(&sum) / (c as f64 * nn * nn))
}

/// V₀ with POSP at `beta_ref` substituted analytically:
/// `Σ π_n⁻¹ r_n² x_n x_nᵀ = (Σ|r_n|‖M_X⁻¹x_n‖)·Σ (|r_n|/‖M_X⁻¹x_n‖) x_n x_nᵀ`.
pub fn compute_v0_posp(data: &Dataset, beta_ref: ArrayView1<f64>, hp: &HyperParams, c: usize) -> Result<Array2<f64>> {
    if c == 0 {
        return Err(Error::invalid("subsample size must be at least 1"));
    }
    let parts = ssp::posp_parts(data, beta_ref, hp, &GramCache::new(data))?;
    let total =
        linalg::compensated_sum(parts.residuals.iter().zip(parts.scaled_norms.iter()).map(|(r, s)| r.abs() * s));
    let mut weights = Array1::<f64>::zeros(data.n());
    for (n, (&r, &s)) in parts.residuals.iter().zip(parts.scaled_norms.iter()).enumerate() {
        if s > 0.0 {
            weights[n] = total * r.abs() / s;
        } else if r != 0.0 {
            return Err(Error::invalid(format!("row {n} has ‖M_X⁻¹x_n‖ = 0 but nonzero residual {r}")));
        }
    }
    let c_osa = compute_c_osa(beta_ref, hp)?;
    let sum = linalg::weighted_gram(data.x(), weights.view()) + plan_free_terms(data, &parts.residuals, &c_osa);
    let nn = data.n() as f64;
    Ok(linalg::symmetrize(&sum) / (c as f64 * nn * nn))
}

/// `V = M_X⁻¹ V₀ M_X⁻¹` from an already computed V₀.
pub fn sandwich(data: &Dataset, beta_ref: ArrayView1<f64>, hp: &HyperParams, v0: Array2<f64>) -> Result<AsymptoticDiagnostics> {
    let m_x = compute_mx(data, beta_ref, hp)?;
    let chol = Cholesky::factor(&m_x)?;
    let left = chol.solve_matrix(&v0);
    let v = linalg::symmetrize(&chol.solve_matrix(&left.t().to_owned()));
    let trace_v = v.diag().sum();
    Ok(AsymptoticDiagnostics { m_x, c_osa: compute_c_osa(beta_ref, hp)?, v0, v, trace_v })
}

/// Full diagnostics for an arbitrary plan.
pub fn compute_v(
    data: &Dataset,
    plan: &SamplingPlan,
    beta_ref: ArrayView1<f64>,
    hp: &HyperParams,
    c: usize,
) -> Result<AsymptoticDiagnostics> {
    let v0 = compute_v0(data, plan, beta_ref, hp, c)?;
    sandwich(data, beta_ref, hp, v0)
}

/// Diagnostics for POSP at `beta_ref`, via [`compute_v0_posp`].
pub fn compute_v_posp(data: &Dataset, beta_ref: ArrayView1<f64>, hp: &HyperParams, c: usize) -> Result<AsymptoticDiagnostics> {
    let v0 = compute_v0_posp(data, beta_ref, hp, c)?;
    sandwich(data, beta_ref, hp, v0)
}

/// Symmetric inverse square root of a covariance matrix. Eigenvalues are
/// clipped at zero first; a (numerically) singular matrix is an error.
pub fn inverse_sqrt(v: &Array2<f64>) -> Result<Array2<f64>> {
    let (vals, vecs) = linalg::sym_eigen(&linalg::symmetrize(v));
    let top = vals.iter().fold(0.0_f64, |m, &x| m.max(x));
    let floor = top * 1e-14;
    if !(top > 0.0) || vals.iter().any(|&x| x.max(0.0) <= floor) {
        return Err(Error::numerical("covariance matrix is singular; cannot standardize"));
    }
    let scale = vals.mapv(|x| 1.0 / x.max(0.0).sqrt());
    Ok(vecs.dot(&Array2::from_diag(&scale)).dot(&vecs.t()))
}

/// `V^{−1/2}(β̃⁽ᵏ⁾ − β̂)` for every sample.
pub fn standardize_errors(
    samples: &[Coefficients],
    beta_hat: &Coefficients,
    diag: &AsymptoticDiagnostics,
) -> Result<Vec<Array1<f64>>> {
    let w = inverse_sqrt(&diag.v)?;
    samples
        .iter()
        .map(|s| {
            if s.len() != beta_hat.len() {
                return Err(Error::invalid("sample and reference coefficients differ in length"));
            }
            Ok(w.dot(&(&s.beta - &beta_hat.beta)))
        })
        .collect()
}
