//! Subsampling probabilities and with-replacement sketch draws.
//!
//! Three plan families are provided: uniform, basic leveraging (BLEV) and the
//! pseudo-optimal plan (POSP) `π_n ∝ |r_n|·‖M_X⁻¹x_n‖`. For studying the
//! A-optimal quadratic system, [`osp_coefficients`] exposes its coefficients
//! under the proportionality constant that yields POSP.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics;
use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};
use crate::model::{Dataset, HyperParams, SketchSample};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Uniform,
    Blev,
    Posp,
    Custom,
}

/// Probability vector over the N rows of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    probs: Array1<f64>,
    kind: PlanKind,
}

const SUM_TOL: f64 = 1e-12;

impl SamplingPlan {
    /// Wraps an explicit probability vector. Entries must be nonnegative and
    /// sum to one within 1e-12.
    pub fn custom(probs: Array1<f64>) -> Result<Self> {
        Self::checked(probs, PlanKind::Custom)
    }

    fn checked(probs: Array1<f64>, kind: PlanKind) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("sampling plan must cover at least one row"));
        }
        if let Some((n, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid(format!("sampling probability {p} at row {n} is negative or non-finite")));
        }
        let total = linalg::compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid(format!("sampling probabilities sum to {total}, expected 1")));
        }
        Ok(Self { probs, kind })
    }

    /// Normalizes nonnegative weights into a plan.
    fn from_weights(weights: Array1<f64>, kind: PlanKind) -> Result<Self> {
        let total = linalg::compensated_sum(weights.iter().copied());
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegeneratePlan(format!("{kind:?} weights sum to {total}")));
        }
        Self::checked(weights / total, kind)
    }

    pub fn probs(&self) -> ArrayView1<'_, f64> {
        self.probs.view()
    }

    pub fn kind(&self) -> PlanKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `(1−γ)π + γ/N`. γ = 0 leaves the plan untouched.
    pub fn mix_uniform(&self, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("mixing weight must lie in [0, 1], got {gamma}")));
        }
        if gamma == 0.0 {
            return Ok(self.clone());
        }
        let n = self.len() as f64;
        let mixed = self.probs.mapv(|p| (1.0 - gamma) * p + gamma / n);
        Self::from_weights(mixed, self.kind)
    }
}

/// `π_n = 1/N`.
pub fn uniform_ssp(n: usize) -> Result<SamplingPlan> {
    if n == 0 {
        return Err(Error::invalid("uniform plan needs N >= 1"));
    }
    Ok(SamplingPlan { probs: Array1::from_elem(n, 1.0 / n as f64), kind: PlanKind::Uniform })
}

/// Leverage scores `‖u_n‖²` from the thin QR factor of X, normalized by their
/// sum (which is p).
pub fn blev_ssp(data: &Dataset) -> Result<SamplingPlan> {
    let q = linalg::thin_q(data.x()).map_err(|e| match e {
        Error::Numerical(msg) => Error::numerical(format!("leverage scores unavailable: {msg}")),
        other => other,
    })?;
    let lev = q.map_axis(Axis(1), |row| row.dot(&row));
    SamplingPlan::from_weights(lev, PlanKind::Blev)
}

/// Precomputed full-data quantities shared by every POSP evaluation on the
/// same dataset: the Gram matrix `XᵀX`.
#[derive(Debug, Clone)]
pub struct GramCache {
    gram: Array2<f64>,
}

impl GramCache {
    pub fn new(data: &Dataset) -> Self {
        Self { gram: linalg::gram(data.x()) }
    }

    pub fn gram(&self) -> &Array2<f64> {
        &self.gram
    }
}

/// Row-level ingredients of POSP: residuals `r_n` and norms `‖M_X⁻¹x_n‖`,
/// plus the factorization of M_X they came from.
pub(crate) struct PospParts {
    pub residuals: Array1<f64>,
    pub scaled_rows: Array2<f64>,
    pub scaled_norms: Array1<f64>,
    pub mx_chol: Cholesky,
}

pub(crate) fn posp_parts(data: &Dataset, beta_ref: ArrayView1<f64>, hp: &HyperParams, cache: &GramCache) -> Result<PospParts> {
    let mx = asymptotics::mx_from_gram(cache.gram(), data.n(), beta_ref, hp)?;
    let mx_chol = Cholesky::factor(&mx)?;
    let scaled_rows = mx_chol.solve_rows(data.x());
    let scaled_norms = scaled_rows.map_axis(Axis(1), |row| row.dot(&row).sqrt());
    let residuals = data.residuals(beta_ref)?;
    Ok(PospParts { residuals, scaled_rows, scaled_norms, mx_chol })
}

/// Pseudo-optimal plan `π_n = |r_n|‖M_X⁻¹x_n‖ / Σ_m |r_m|‖M_X⁻¹x_m‖`, with
/// residuals and M_X evaluated at `beta_ref`.
pub fn posp_ssp(data: &Dataset, beta_ref: ArrayView1<f64>, hp: &HyperParams) -> Result<SamplingPlan> {
    posp_ssp_cached(data, beta_ref, hp, &GramCache::new(data))
}

pub fn posp_ssp_cached(
    data: &Dataset,
    beta_ref: ArrayView1<f64>,
    hp: &HyperParams,
    cache: &GramCache,
) -> Result<SamplingPlan> {
    let parts = posp_parts(data, beta_ref, hp, cache)?;
    let weights = Array1::from_iter(parts.residuals.iter().zip(parts.scaled_norms.iter()).map(|(r, s)| r.abs() * s));
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::DegeneratePlan("all residuals are zero at the reference coefficients".into()));
    }
    SamplingPlan::from_weights(weights, PlanKind::Posp)
}

/// Coefficients of the per-row quadratic `𝒜π² + ℬ_nπ + 𝒟_n = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OspCoefficients {
    pub a: f64,
    pub b: Array1<f64>,
    pub d: Array1<f64>,
    pub k: f64,
}

impl OspCoefficients {
    /// Nonnegative root `(−ℬ_n + √(ℬ_n² − 4𝒜𝒟_n)) / (2𝒜)` of row `n`.
    pub fn root(&self, n: usize) -> f64 {
        let disc = self.b[n] * self.b[n] - 4.0 * self.a * self.d[n];
        (-self.b[n] + disc.sqrt()) / (2.0 * self.a)
    }

    /// `√(−𝒟_n/𝒜)`, the root with the linear term dropped.
    pub fn posp_entry(&self, n: usize) -> f64 {
        (-self.d[n] / self.a).sqrt()
    }
}

/// `𝒜 = ‖M_X⁻¹C_osa‖² − 𝒦`, `ℬ_n = 2r_n(M_X⁻¹C_osa)ᵀ(M_X⁻¹x_n)`,
/// `𝒟_n = r_n²‖M_X⁻¹x_n‖²`, with `𝒦 = ‖M_X⁻¹C_osa‖² + (Σ|r_n|‖M_X⁻¹x_n‖)²`.
pub fn osp_coefficients(data: &Dataset, beta_ref: ArrayView1<f64>, hp: &HyperParams) -> Result<OspCoefficients> {
    let parts = posp_parts(data, beta_ref, hp, &GramCache::new(data))?;
    let c_osa = asymptotics::compute_c_osa(beta_ref, hp)?;
    let mc = parts.mx_chol.solve(c_osa.view());
    let mc_sq = mc.dot(&mc);
    let b = Array1::from_iter(parts.scaled_rows.rows().into_iter().zip(parts.residuals.iter()).map(|(zn, r)| 2.0 * r * mc.dot(&zn)));
    let d = Array1::from_iter(parts.residuals.iter().zip(parts.scaled_norms.iter()).map(|(r, s)| r * r * s * s));
    let total = linalg::compensated_sum(parts.residuals.iter().zip(parts.scaled_norms.iter()).map(|(r, s)| r.abs() * s));
    // 𝒜 = ‖M_X⁻¹C_osa‖² − 𝒦 collapses to −(Σ|r_n|‖M_X⁻¹x_n‖)².
    Ok(OspCoefficients { a: -(total * total), b, d, k: mc_sq + total * total })
}

/// Walker/Vose alias table: O(N) construction, O(1) per draw.
#[derive(Debug, Clone)]
pub struct AliasTable {
    cutoff: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(probs: ArrayView1<f64>) -> Result<Self> {
        let n = probs.len();
        if n == 0 {
            return Err(Error::invalid("alias table needs at least one outcome"));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("alias table probabilities must be nonnegative and finite"));
        }
        let total: f64 = linalg::compensated_sum(probs.iter().copied());
        if !(total > 0.0) {
            return Err(Error::invalid("alias table probabilities sum to zero"));
        }
        let mut cutoff: Vec<f64> = probs.iter().map(|p| p * n as f64 / total).collect();
        let mut alias: Vec<usize> = (0..n).collect();
        let mut small = Vec::new();
        let mut large = Vec::new();
        for (i, &c) in cutoff.iter().enumerate() {
            if c < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            alias[s] = l;
            cutoff[l] -= 1.0 - cutoff[s];
            if cutoff[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding.
        for i in large.into_iter().chain(small) {
            if cutoff[i] > 0.0 {
                cutoff[i] = 1.0;
            }
        }
        Ok(Self { cutoff, alias })
    }

    pub fn len(&self) -> usize {
        self.cutoff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cutoff.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.cutoff.len());
        let u: f64 = rng.random();
        if u < self.cutoff[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// Draws `c` rows i.i.d. from `plan`, recording each row's probability.
/// Deterministic in `seed`.
pub fn draw_with_replacement(plan: &SamplingPlan, data: &Dataset, c: usize, seed: u64) -> Result<SketchSample> {
    if plan.len() != data.n() {
        return Err(Error::invalid(format!("plan covers {} rows but dataset has {}", plan.len(), data.n())));
    }
    if c == 0 {
        return Err(Error::invalid("subsample size must be at least 1"));
    }
    let table = AliasTable::new(plan.probs())?;
    let mut rng = seed::rng(seed);
    let indices: Vec<usize> = (0..c).map(|_| table.sample(&mut rng)).collect();
    let probs = Array1::from_iter(indices.iter().map(|&i| plan.probs[i]));
    SketchSample::from_indices(data, indices, probs)
}
