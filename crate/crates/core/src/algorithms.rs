//! The general subsampled estimator and the two-step POSP procedure.
//!
//! Seeds for the two stages of [`run_two_step`] are split from the master
//! seed as `seed::derive(seed, [stream::PILOT])` and
//! `seed::derive(seed, [stream::SECOND_STAGE])`.

use crate::error::{Error, Result};
use crate::model::{Coefficients, Dataset, HyperParams, Role};
use crate::newton::{self, NewtonConfig, NewtonReport, PenalizedLeastSquares};
use crate::seed::{self, stream};
use crate::ssp::{self, GramCache, SamplingPlan};

/// β̂_osa: Newton's method on the full sample, started from zero.
pub fn full_reference(data: &Dataset, hp: &HyperParams, cfg: &NewtonConfig) -> Result<NewtonReport> {
    full_reference_cached(data, &GramCache::new(data), hp, cfg)
}

pub fn full_reference_cached(
    data: &Dataset,
    cache: &GramCache,
    hp: &HyperParams,
    cfg: &NewtonConfig,
) -> Result<NewtonReport> {
    hp.validate()?;
    let obj = PenalizedLeastSquares::full_with_gram(data, cache.gram().clone(), hp);
    let init = Coefficients::zeros(data.p(), Role::FullSmooth);
    newton::minimize(&obj, init.view(), cfg, Role::FullSmooth)
}

/// Draws a size-`c` sketch from `plan` and minimizes its weighted criterion.
pub fn run_algorithm1(
    data: &Dataset,
    plan: &SamplingPlan,
    c: usize,
    hp: &HyperParams,
    cfg: &NewtonConfig,
    seed: u64,
) -> Result<NewtonReport> {
    run_algorithm1_from(data, plan, c, hp, cfg, seed, &Coefficients::zeros(data.p(), Role::Subsample))
}

/// [`run_algorithm1`] with an explicit Newton starting point.
pub fn run_algorithm1_from(
    data: &Dataset,
    plan: &SamplingPlan,
    c: usize,
    hp: &HyperParams,
    cfg: &NewtonConfig,
    seed: u64,
    init: &Coefficients,
) -> Result<NewtonReport> {
    let sketch = ssp::draw_with_replacement(plan, data, c, seed)?;
    newton::solve_sketch(&sketch, hp, init, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepConfig {
    /// Pilot subsample size C₀.
    pub c0: usize,
    /// Second-stage subsample size C.
    pub c: usize,
    pub newton: NewtonConfig,
    pub seed: u64,
    /// Weight γ of the uniform component mixed into POSP; 0 keeps POSP as is.
    pub mix_gamma: f64,
}

impl TwoStepConfig {
    pub fn new(c0: usize, c: usize, seed: u64) -> Self {
        Self { c0, c, newton: NewtonConfig::default(), seed, mix_gamma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c0 == 0 || self.c == 0 {
            return Err(Error::invalid("two-step subsample sizes must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.mix_gamma) {
            return Err(Error::invalid("mix_gamma must lie in [0, 1]"));
        }
        self.newton.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TwoStepResult {
    pub beta_pilot: Coefficients,
    pub beta_final: Coefficients,
    pub plan: SamplingPlan,
    pub pilot_report: NewtonReport,
    pub final_report: NewtonReport,
}

/// Two-step estimator: a uniform pilot of size C₀ gives β̃₀, POSP is built at
/// β̃₀ over the full sample, and a size-C POSP sketch gives β̆.
pub fn run_two_step(data: &Dataset, hp: &HyperParams, cfg: &TwoStepConfig) -> Result<TwoStepResult> {
    run_two_step_cached(data, &GramCache::new(data), hp, cfg)
}

pub fn run_two_step_cached(
    data: &Dataset,
    cache: &GramCache,
    hp: &HyperParams,
    cfg: &TwoStepConfig,
) -> Result<TwoStepResult> {
    cfg.validate()?;
    hp.validate()?;
    let uniform = ssp::uniform_ssp(data.n())?;
    let pilot_report = run_algorithm1(data, &uniform, cfg.c0, hp, &cfg.newton, seed::derive(cfg.seed, &[stream::PILOT]))?;
    if !pilot_report.converged {
        return Err(Error::PilotFailure(Box::new(pilot_report)));
    }
    let beta_pilot = pilot_report.beta.clone().with_role(Role::Pilot);

    let plan = ssp::posp_ssp_cached(data, beta_pilot.view(), hp, cache)?.mix_uniform(cfg.mix_gamma)?;
    let mut final_report = run_algorithm1_from(
        data,
        &plan,
        cfg.c,
        hp,
        &cfg.newton,
        seed::derive(cfg.seed, &[stream::SECOND_STAGE]),
        &beta_pilot,
    )?;
    final_report.beta.role = Role::TwoStep;
    Ok(TwoStepResult {
        beta_pilot: beta_pilot.clone(),
        beta_final: final_report.beta.clone(),
        plan,
        pilot_report,
        final_report,
    })
}
