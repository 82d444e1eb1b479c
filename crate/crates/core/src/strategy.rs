//! Registry of subsampling methods driven by the experiment harness.
//!
//! Each method is a trait object built once per dataset (BLEV computes its
//! leverage scores there) and then fitted many times with different seeds.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::algorithms::{self, TwoStepConfig};
use crate::error::{Error, Result};
use crate::model::{Dataset, HyperParams};
use crate::newton::{NewtonConfig, NewtonReport};
use crate::ssp::{self, GramCache, SamplingPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Uniform,
    Blev,
    Posp,
}

impl MethodKind {
    pub const ALL: [MethodKind; 3] = [MethodKind::Uniform, MethodKind::Blev, MethodKind::Posp];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Uniform => "uniform",
            MethodKind::Blev => "blev",
            MethodKind::Posp => "posp",
        }
    }

    /// Stable numeric id used in seed derivation.
    pub fn id(self) -> u64 {
        match self {
            MethodKind::Uniform => 0,
            MethodKind::Blev => 1,
            MethodKind::Posp => 2,
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "uni" => Ok(MethodKind::Uniform),
            "blev" => Ok(MethodKind::Blev),
            "posp" | "two-step" | "twostep" | "posp-two-step" => Ok(MethodKind::Posp),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Everything a fit shares across repeats.
pub struct FitContext<'a> {
    pub data: &'a Dataset,
    pub cache: &'a GramCache,
    pub hp: HyperParams,
    pub newton: NewtonConfig,
}

/// One draw of a subsampled estimator.
#[derive(Debug, Clone)]
pub struct Fit {
    pub report: NewtonReport,
    /// Newton steps summed over all stages.
    pub newton_steps: usize,
}

pub trait SamplingMethod: Send + Sync {
    fn kind(&self) -> MethodKind;

    /// Rows the method draws for a second-stage size `c`.
    fn budget(&self, c: usize) -> usize;

    fn fit(&self, ctx: &FitContext<'_>, c: usize, seed: u64) -> Result<Fit>;
}

struct FixedPlan {
    kind: MethodKind,
    plan: SamplingPlan,
    extra: usize,
}

impl SamplingMethod for FixedPlan {
    fn kind(&self) -> MethodKind {
        self.kind
    }

    fn budget(&self, c: usize) -> usize {
        c + self.extra
    }

    fn fit(&self, ctx: &FitContext<'_>, c: usize, seed: u64) -> Result<Fit> {
        let report = algorithms::run_algorithm1(ctx.data, &self.plan, self.budget(c), &ctx.hp, &ctx.newton, seed)?;
        Ok(Fit { newton_steps: report.iterations, report })
    }
}

struct TwoStep {
    c0: usize,
    mix_gamma: f64,
}

impl SamplingMethod for TwoStep {
    fn kind(&self) -> MethodKind {
        MethodKind::Posp
    }

    fn budget(&self, c: usize) -> usize {
        c + self.c0
    }

    fn fit(&self, ctx: &FitContext<'_>, c: usize, seed: u64) -> Result<Fit> {
        let cfg = TwoStepConfig { c0: self.c0, c, newton: ctx.newton, seed, mix_gamma: self.mix_gamma };
        let res = algorithms::run_two_step_cached(ctx.data, ctx.cache, &ctx.hp, &cfg)?;
        Ok(Fit {
            newton_steps: res.pilot_report.iterations + res.final_report.iterations,
            report: res.final_report,
        })
    }
}

/// Options shared by all constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOptions {
    pub c0: usize,
    pub mix_gamma: f64,
    /// Give single-stage methods the two-step budget C + C₀ instead of C.
    pub match_budget: bool,
}

type Constructor = fn(&Dataset, &MethodOptions) -> Result<Box<dyn SamplingMethod>>;

fn extra(opts: &MethodOptions) -> usize {
    if opts.match_budget {
        opts.c0
    } else {
        0
    }
}

fn build_uniform(data: &Dataset, opts: &MethodOptions) -> Result<Box<dyn SamplingMethod>> {
    Ok(Box::new(FixedPlan { kind: MethodKind::Uniform, plan: ssp::uniform_ssp(data.n())?, extra: extra(opts) }))
}

fn build_blev(data: &Dataset, opts: &MethodOptions) -> Result<Box<dyn SamplingMethod>> {
    Ok(Box::new(FixedPlan { kind: MethodKind::Blev, plan: ssp::blev_ssp(data)?, extra: extra(opts) }))
}

fn build_posp(_: &Dataset, opts: &MethodOptions) -> Result<Box<dyn SamplingMethod>> {
    if opts.c0 == 0 {
        return Err(Error::invalid("two-step needs c0 >= 1"));
    }
    Ok(Box::new(TwoStep { c0: opts.c0, mix_gamma: opts.mix_gamma }))
}

const REGISTRY: [(MethodKind, Constructor); 3] = [
    (MethodKind::Uniform, build_uniform),
    (MethodKind::Blev, build_blev),
    (MethodKind::Posp, build_posp),
];

pub fn build(kind: MethodKind, data: &Dataset, opts: &MethodOptions) -> Result<Box<dyn SamplingMethod>> {
    let (_, ctor) = REGISTRY.iter().find(|(k, _)| *k == kind).expect("every kind is registered");
    ctor(data, opts)
}
