//! Synthetic designs for the four simulation cases.
//!
//! The reference dimension is p = 50. Other dimensions are supported by
//! scaling the coefficient blocks: cases 1 and 2 need `p % 5 == 0` (five
//! equal blocks of 4, 0, 2, 0, 1), case 3 takes any p, and case 4 needs
//! `p >= 4`: four latent groups of `g = min(5, p / 4)` features each, then
//! independent noise features.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::model::{Coefficients, Dataset, Role};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    Case1,
    Case2,
    Case3,
    Case4,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::Case1, CaseId::Case2, CaseId::Case3, CaseId::Case4];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Case1 => "case1",
            CaseId::Case2 => "case2",
            CaseId::Case3 => "case3",
            CaseId::Case4 => "case4",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "case1" | "1" => Ok(CaseId::Case1),
            "case2" | "2" => Ok(CaseId::Case2),
            "case3" | "3" => Ok(CaseId::Case3),
            "case4" | "4" => Ok(CaseId::Case4),
            other => Err(Error::invalid(format!("unknown simulation case '{other}'"))),
        }
    }
}

/// How the `exp(2.0)` covariates of case 3 are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExpConvention {
    /// Rate 2, mean 0.5.
    #[default]
    Rate,
    /// Mean 2, rate 0.5.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationCase {
    pub case_id: CaseId,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub beta_true: Coefficients,
    pub seed: u64,
    pub exp_convention: ExpConvention,
}

impl SimulationCase {
    /// A case with σ = 3 and the case's own coefficient vector.
    pub fn new(case_id: CaseId, n: usize, p: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("simulation needs n >= 1"));
        }
        Ok(Self {
            case_id,
            n,
            p,
            sigma: 3.0,
            beta_true: true_beta(case_id, p)?,
            seed,
            exp_convention: ExpConvention::Rate,
        })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("simulation needs n >= 1"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if self.beta_true.len() != self.p {
            return Err(Error::invalid(format!(
                "beta_true has length {} but p = {}",
                self.beta_true.len(),
                self.p
            )));
        }
        Ok(())
    }
}

/// The coefficient vector of a case at dimension `p`.
pub fn true_beta(case_id: CaseId, p: usize) -> Result<Coefficients> {
    let beta = match case_id {
        CaseId::Case1 | CaseId::Case2 => {
            if p == 0 || !p.is_multiple_of(5) {
                return Err(Error::invalid(format!("{case_id} needs p divisible by 5, got {p}")));
            }
            let block = p / 5;
            Array1::from_shape_fn(p, |j| [4.0, 0.0, 2.0, 0.0, 1.0][j / block])
        }
        CaseId::Case3 => {
            if p == 0 {
                return Err(Error::invalid("p must be at least 1"));
            }
            Array1::from_elem(p, 2.0)
        }
        CaseId::Case4 => {
            if p < 4 {
                return Err(Error::invalid(format!("case4 needs p >= 4, got {p}")));
            }
            let grouped = 4 * case4_group_size(p);
            Array1::from_shape_fn(p, |j| if j < grouped { 3.0 } else { 0.0 })
        }
    };
    Ok(Coefficients { beta, role: Role::True })
}

/// Features per latent group in case 4.
pub fn case4_group_size(p: usize) -> usize {
    (p / 4).min(5)
}

/// Σᵢⱼ = 0.5^|i−j|.
pub fn ar_covariance(p: usize) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| 0.5f64.powi(i.abs_diff(j) as i32))
}

/// Draws the design and the response y = Xβ + σε. Row n uses its own
/// generator, so a dataset is a prefix of any larger one with the same seed.
pub fn generate(case: &SimulationCase) -> Result<Dataset> {
    case.validate()?;
    let (n, p) = (case.n, case.p);
    let factor = match case.case_id {
        CaseId::Case1 | CaseId::Case2 => Some(Cholesky::factor(&ar_covariance(p))?.lower().clone()),
        _ => None,
    };
    let chi = ChiSquared::new(3.0).map_err(|e| Error::invalid(e.to_string()))?;
    let rate = match case.exp_convention {
        ExpConvention::Rate => 2.0,
        ExpConvention::Mean => 0.5,
    };
    let exp = Exp::new(rate).map_err(|e| Error::invalid(e.to_string()))?;

    let mut x = Array2::<f64>::zeros((n, p));
    let mut y = Array1::<f64>::zeros(n);
    let mut z = Array1::<f64>::zeros(p);
    let data_seed = seed::derive(case.seed, &[seed::stream::DATA]);
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        let mut rng = seed::rng(seed::derive(data_seed, &[i as u64]));
        match case.case_id {
            CaseId::Case1 | CaseId::Case2 => {
                z.mapv_inplace(|_| rng.sample(StandardNormal));
                let l = factor.as_ref().expect("factor exists for cases 1 and 2");
                row.assign(&l.dot(&z));
                if case.case_id == CaseId::Case2 {
                    let w: f64 = chi.sample(&mut rng);
                    row /= (w / 3.0).sqrt();
                }
            }
            CaseId::Case3 => row.mapv_inplace(|_| exp.sample(&mut rng)),
            CaseId::Case4 => {
                let g = case4_group_size(p);
                let latent: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                for (j, v) in row.iter_mut().enumerate() {
                    let e: f64 = rng.sample(StandardNormal);
                    *v = if j < 4 * g { latent[j / g] + 0.1 * e } else { e };
                }
            }
        }
        let noise: f64 = rng.sample(StandardNormal);
        y[i] = row.dot(&case.beta_true.beta) + case.sigma * noise;
    }
    Dataset::new(x, y)
}
