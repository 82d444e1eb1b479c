//! Repeated-subsampling experiments and the C₀ proportion sweep.
//!
//! Every repeat gets its own seed, `seed::derive(master, [REPEAT, method, C,
//! C₀, r])`, so results do not depend on the thread count or on which worker
//! ran a task. Results are collected in task order and aggregated with
//! compensated sums.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::algorithms;
use crate::error::{Error, Result};
use crate::harness::io::{self, LoadOptions};
use crate::harness::metrics;
use crate::model::{Coefficients, Dataset, HyperParams};
use crate::newton::NewtonConfig;
use crate::seed::{self, stream};
use crate::simgen::{self, CaseId, ExpConvention, SimulationCase};
use crate::ssp::GramCache;
use crate::strategy::{self, FitContext, MethodKind, MethodOptions, SamplingMethod};
use crate::tuning::{self, CVConfig};

/// Bumped whenever report columns or JSON fields change.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    Simulation {
        case: CaseId,
        n: usize,
        p: usize,
        sigma: f64,
        seed: u64,
        exp_convention: ExpConvention,
        /// Rows of the independent test set used for Re.
        test_n: usize,
    },
    Csv {
        path: PathBuf,
        test_path: Option<PathBuf>,
        target: String,
        add_intercept: bool,
        standardize: bool,
        group_column: Option<String>,
        /// Hit-k on the test set; needs `group_column`.
        hit_k: Option<usize>,
    },
}

impl SourceSpec {
    pub fn simulation(case: CaseId, n: usize, p: usize, seed: u64) -> Self {
        SourceSpec::Simulation { case, n, p, sigma: 3.0, seed, exp_convention: ExpConvention::Rate, test_n: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HpChoice {
    Fixed(HyperParams),
    Cv(CVConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub source: SourceSpec,
    pub methods: Vec<MethodKind>,
    pub c_grid: Vec<usize>,
    pub c0: usize,
    pub repeats: usize,
    pub hp: HpChoice,
    pub seed: u64,
    pub newton: NewtonConfig,
    pub mix_gamma: f64,
    /// Single-stage methods draw C + C₀ rows instead of C.
    pub match_budget: bool,
    #[serde(skip)]
    pub threads: usize,
}

impl ExperimentConfig {
    pub fn new(source: SourceSpec, hp: HyperParams) -> Self {
        Self {
            source,
            methods: MethodKind::ALL.to_vec(),
            c_grid: vec![1000],
            c0: 1000,
            repeats: 100,
            hp: HpChoice::Fixed(hp),
            seed: 0,
            newton: NewtonConfig::default(),
            mix_gamma: 0.0,
            match_budget: false,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if self.c_grid.is_empty() || self.c_grid.contains(&0) {
            return Err(Error::invalid("C grid must be nonempty with positive entries"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.c0 == 0 && self.methods.contains(&MethodKind::Posp) {
            return Err(Error::invalid("c0 must be at least 1 for the two-step method"));
        }
        if let HpChoice::Fixed(hp) = &self.hp {
            hp.validate()?;
        }
        self.newton.validate()
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON of the config.
    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }
}

fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let json = serde_json::to_vec(cfg)?;
    Ok(hex::encode(&Sha256::digest(&json)[..8]))
}

/// Training data plus whatever test data the source provides.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub test_groups: Option<Vec<String>>,
    pub hit_k: Option<usize>,
}

pub fn prepare(source: &SourceSpec) -> Result<Prepared> {
    match source {
        SourceSpec::Simulation { case, n, p, sigma, seed, exp_convention, test_n } => {
            let mk = |n: usize, seed: u64| -> Result<Dataset> {
                let mut c = SimulationCase::new(*case, n, *p, seed)?.with_sigma(*sigma)?;
                c.exp_convention = *exp_convention;
                simgen::generate(&c)
            };
            let train = mk(*n, *seed)?;
            let test = if *test_n > 0 { Some(mk(*test_n, seed::derive(*seed, &[stream::TEST_SET]))?) } else { None };
            Ok(Prepared { train, test, test_groups: None, hit_k: None })
        }
        SourceSpec::Csv { path, test_path, target, add_intercept, standardize, group_column, hit_k } => {
            let opts = LoadOptions {
                target: target.clone(),
                add_intercept: *add_intercept,
                standardize: *standardize,
                scaling: None,
                group_column: None,
            };
            let loaded = io::load_csv(path, &opts)?;
            let train = loaded.dataset;
            let (test, test_groups) = match test_path {
                Some(tp) => {
                    let loaded = io::load_csv(tp, &LoadOptions { group_column: group_column.clone(), scaling: loaded.scaling, ..opts })?;
                    if loaded.dataset.p() != train.p() {
                        return Err(Error::invalid(format!(
                            "test set has {} covariates but training set has {}",
                            loaded.dataset.p(),
                            train.p()
                        )));
                    }
                    (Some(loaded.dataset), loaded.groups)
                }
                None => (None, None),
            };
            if hit_k.is_some() && test_groups.is_none() {
                return Err(Error::invalid("hit-k needs a test set with a group column"));
            }
            Ok(Prepared { train, test, test_groups, hit_k: *hit_k })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub config_hash: String,
    pub method: MethodKind,
    /// C₀/(C + C₀) in a proportion sweep.
    pub proportion: Option<f64>,
    pub c0: Option<usize>,
    pub c: usize,
    pub budget: usize,
    pub repeats: usize,
    pub failures: usize,
    pub mse: f64,
    pub mse_sd: f64,
    pub re: Option<f64>,
    pub re_sd: Option<f64>,
    pub mae: Option<f64>,
    pub mae_sd: Option<f64>,
    pub hit_k: Option<f64>,
    pub hit_k_sd: Option<f64>,
    pub newton_steps: f64,
    pub newton_steps_sd: f64,
}

/// Wall-clock timings, kept apart from the reproducible report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub config_hash: String,
    pub method: MethodKind,
    pub proportion: Option<f64>,
    pub c: usize,
    pub seconds_mean: f64,
    pub seconds_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullReference {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Wall time; left out of the JSON so reports stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub hyperparams: HyperParams,
    pub n: usize,
    pub p: usize,
    pub full_reference: FullReference,
    pub rows: Vec<ReportRow>,
    #[serde(skip)]
    pub timings: Vec<TimingRow>,
}

impl MetricReport {
    pub fn row(&self, method: MethodKind, c: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.c == c && r.proportion.is_none())
    }
}

struct Task {
    cell: usize,
    c: usize,
    seed: u64,
}

struct Outcome {
    estimate: Option<Coefficients>,
    steps: usize,
    seconds: f64,
}

/// One report row's worth of work.
struct Cell<'m> {
    method: &'m dyn SamplingMethod,
    c: usize,
    c0: Option<usize>,
    proportion: Option<f64>,
}

struct Context<'a> {
    prepared: &'a Prepared,
    cache: GramCache,
    hp: HyperParams,
    reference: Coefficients,
    full: FullReference,
}

fn setup<'a>(prepared: &'a Prepared, hp: &HpChoice, newton: &NewtonConfig) -> Result<Context<'a>> {
    let hp = match hp {
        HpChoice::Fixed(hp) => *hp,
        HpChoice::Cv(cv) => tuning::cross_validate(&prepared.train, cv, newton)?.best,
    };
    let cache = GramCache::new(&prepared.train);
    let start = Instant::now();
    let full = algorithms::full_reference_cached(&prepared.train, &cache, &hp, newton)?;
    let seconds = start.elapsed().as_secs_f64();
    if !full.converged {
        return Err(Error::numerical(format!(
            "full-data reference did not converge in {} iterations (gradient norm {:.3e})",
            full.iterations, full.final_grad_norm
        )));
    }
    let summary = FullReference {
        beta: full.beta.beta.to_vec(),
        iterations: full.iterations,
        converged: full.converged,
        seconds,
    };
    Ok(Context { prepared, cache, hp, reference: full.beta, full: summary })
}

fn run_cells(
    ctx: &Context<'_>,
    cells: &[Cell<'_>],
    tasks: &[Task],
    newton: &NewtonConfig,
    threads: usize,
) -> Result<Vec<Outcome>> {
    let fit_ctx = FitContext { data: &ctx.prepared.train, cache: &ctx.cache, hp: ctx.hp, newton: *newton };
    let run = |t: &Task| {
        let start = Instant::now();
        let fit = cells[t.cell].method.fit(&fit_ctx, t.c, t.seed);
        let seconds = start.elapsed().as_secs_f64();
        match fit {
            Ok(f) if f.report.converged => Outcome { estimate: Some(f.report.beta), steps: f.newton_steps, seconds },
            _ => Outcome { estimate: None, steps: 0, seconds },
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| tasks.par_iter().map(run).collect()))
}

fn summarize(
    ctx: &Context<'_>,
    cell: &Cell<'_>,
    outcomes: &[&Outcome],
    hash: &str,
) -> Result<(ReportRow, TimingRow)> {
    let estimates: Vec<Coefficients> = outcomes.iter().filter_map(|o| o.estimate.clone()).collect();
    let failures = outcomes.len() - estimates.len();
    let nan_row = || (f64::NAN, f64::NAN);
    let (mse, mse_sd) = if estimates.is_empty() {
        nan_row()
    } else {
        let d: Vec<f64> = estimates
            .iter()
            .map(|e| metrics::squared_distance(e.view(), ctx.reference.view()))
            .collect();
        metrics::mean_sd(&d)
    };
    let per_estimate = |f: &dyn Fn(&Coefficients) -> Result<f64>| -> Result<Option<(f64, f64)>> {
        if estimates.is_empty() {
            return Ok(None);
        }
        let v = estimates.iter().map(f).collect::<Result<Vec<_>>>()?;
        Ok(Some(metrics::mean_sd(&v)))
    };
    let (re, mae, hit) = match &ctx.prepared.test {
        Some(test) => {
            let re = per_estimate(&|e| metrics::re(std::slice::from_ref(e), &ctx.reference, test))?;
            let mae = per_estimate(&|e| metrics::mae(e, test))?;
            let hit = match (ctx.prepared.hit_k, &ctx.prepared.test_groups) {
                (Some(k), Some(groups)) => per_estimate(&|e| {
                    let pred = test.x().dot(&e.beta);
                    metrics::hit_k_by_label(pred.as_slice().expect("contiguous"), &test.y().to_vec(), groups, k)
                })?,
                _ => None,
            };
            (re, mae, hit)
        }
        None => (None, None, None),
    };
    let steps: Vec<f64> = outcomes.iter().filter(|o| o.estimate.is_some()).map(|o| o.steps as f64).collect();
    let (steps_mean, steps_sd) = if steps.is_empty() { nan_row() } else { metrics::mean_sd(&steps) };
    let secs: Vec<f64> = outcomes.iter().map(|o| o.seconds).collect();
    let (seconds_mean, seconds_sd) = metrics::mean_sd(&secs);
    let method = cell.method.kind();
    let row = ReportRow {
        config_hash: hash.to_owned(),
        method,
        proportion: cell.proportion,
        c0: cell.c0,
        c: cell.c,
        budget: cell.method.budget(cell.c),
        repeats: outcomes.len(),
        failures,
        mse,
        mse_sd,
        re: re.map(|v| v.0),
        re_sd: re.map(|v| v.1),
        mae: mae.map(|v| v.0),
        mae_sd: mae.map(|v| v.1),
        hit_k: hit.map(|v| v.0),
        hit_k_sd: hit.map(|v| v.1),
        newton_steps: steps_mean,
        newton_steps_sd: steps_sd,
    };
    let timing = TimingRow {
        config_hash: hash.to_owned(),
        method,
        proportion: cell.proportion,
        c: cell.c,
        seconds_mean,
        seconds_sd,
    };
    Ok((row, timing))
}

fn execute(
    ctx: &Context<'_>,
    cells: &[Cell<'_>],
    repeats: usize,
    master: u64,
    newton: &NewtonConfig,
    threads: usize,
    hash: &str,
) -> Result<(Vec<ReportRow>, Vec<TimingRow>)> {
    let tasks: Vec<Task> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, cell)| {
            let path = [stream::REPEAT, cell.method.kind().id(), cell.c as u64, cell.c0.unwrap_or(0) as u64];
            (0..repeats).map(move |r| Task {
                cell: i,
                c: cell.c,
                seed: seed::derive(master, &[path[0], path[1], path[2], path[3], r as u64]),
            })
        })
        .collect();
    let outcomes = run_cells(ctx, cells, &tasks, newton, threads)?;
    let mut rows = Vec::with_capacity(cells.len());
    let mut timings = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let mine: Vec<&Outcome> = tasks.iter().zip(&outcomes).filter(|(t, _)| t.cell == i).map(|(_, o)| o).collect();
        let (row, timing) = summarize(ctx, cell, &mine, hash)?;
        rows.push(row);
        timings.push(timing);
    }
    Ok((rows, timings))
}

fn report(
    ctx: Context<'_>,
    config: serde_json::Value,
    hash: String,
    rows: Vec<ReportRow>,
    timings: Vec<TimingRow>,
) -> MetricReport {
    MetricReport {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        config,
        hyperparams: ctx.hp,
        n: ctx.prepared.train.n(),
        p: ctx.prepared.train.p(),
        full_reference: ctx.full,
        rows,
        timings,
    }
}

/// Runs every method at every C for `repeats` repeats against β̂_osa.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricReport> {
    let prepared = prepare(&cfg.source)?;
    run_experiment_on(cfg, &prepared)
}

/// [`run_experiment`] on already prepared data.
pub fn run_experiment_on(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<MetricReport> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let ctx = setup(prepared, &cfg.hp, &cfg.newton)?;
    let opts = MethodOptions { c0: cfg.c0, mix_gamma: cfg.mix_gamma, match_budget: cfg.match_budget };
    let methods =
        cfg.methods.iter().map(|&k| strategy::build(k, &prepared.train, &opts)).collect::<Result<Vec<_>>>()?;
    let cells: Vec<Cell<'_>> = methods
        .iter()
        .flat_map(|m| {
            cfg.c_grid.iter().map(move |&c| Cell {
                method: m.as_ref(),
                c,
                c0: (m.kind() == MethodKind::Posp).then_some(cfg.c0),
                proportion: None,
            })
        })
        .collect();
    let (rows, timings) = execute(&ctx, &cells, cfg.repeats, cfg.seed, &cfg.newton, cfg.threads, &hash)?;
    Ok(report(ctx, serde_json::to_value(cfg)?, hash, rows, timings))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub source: SourceSpec,
    /// Total rows C + C₀.
    pub budget: usize,
    pub proportions: Vec<f64>,
    pub repeats: usize,
    pub hp: HpChoice,
    pub seed: u64,
    pub newton: NewtonConfig,
    pub mix_gamma: f64,
    #[serde(skip)]
    pub threads: usize,
}

/// {0.02, 0.04, …, 0.2, 0.3, 0.4, 0.5}.
pub fn default_proportions() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 50.0).chain([0.3, 0.4, 0.5]).collect()
}

impl SweepConfig {
    pub fn new(source: SourceSpec, hp: HyperParams, budget: usize) -> Self {
        Self {
            source,
            budget,
            proportions: default_proportions(),
            repeats: 100,
            hp: HpChoice::Fixed(hp),
            seed: 0,
            newton: NewtonConfig::default(),
            mix_gamma: 0.0,
            threads: 1,
        }
    }

    /// (C₀, C) for a proportion: C₀ = round(q·budget), clamped so both are ≥ 1.
    pub fn split(&self, q: f64) -> Result<(usize, usize)> {
        if self.budget < 2 {
            return Err(Error::invalid("sweep budget must be at least 2"));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(format!("proportion {q} must lie in (0, 1)")));
        }
        let c0 = ((q * self.budget as f64).round() as usize).clamp(1, self.budget - 1);
        Ok((c0, self.budget - c0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if self.proportions.is_empty() {
            return Err(Error::invalid("proportion grid must be nonempty"));
        }
        for &q in &self.proportions {
            self.split(q)?;
        }
        self.newton.validate()
    }
}

/// Two-step MSE for each C₀ share of a fixed budget, plus a uniform
/// baseline drawing the whole budget. The baseline is the last row.
pub fn run_proportion_sweep(cfg: &SweepConfig) -> Result<MetricReport> {
    let prepared = prepare(&cfg.source)?;
    run_proportion_sweep_on(cfg, &prepared)
}

pub fn run_proportion_sweep_on(cfg: &SweepConfig, prepared: &Prepared) -> Result<MetricReport> {
    cfg.validate()?;
    let hash = config_hash(cfg)?;
    let ctx = setup(prepared, &cfg.hp, &cfg.newton)?;
    // (method, C, C0, pilot proportion)
    type Planned = (Box<dyn SamplingMethod>, usize, Option<usize>, Option<f64>);
    let mut methods: Vec<Planned> = Vec::new();
    for &q in &cfg.proportions {
        let (c0, c) = cfg.split(q)?;
        let opts = MethodOptions { c0, mix_gamma: cfg.mix_gamma, match_budget: false };
        methods.push((strategy::build(MethodKind::Posp, &prepared.train, &opts)?, c, Some(c0), Some(q)));
    }
    let uniform_opts = MethodOptions { c0: 0, mix_gamma: 0.0, match_budget: false };
    methods.push((strategy::build(MethodKind::Uniform, &prepared.train, &uniform_opts)?, cfg.budget, None, None));
    let cells: Vec<Cell<'_>> = methods
        .iter()
        .map(|(m, c, c0, q)| Cell { method: m.as_ref(), c: *c, c0: *c0, proportion: *q })
        .collect();
    let (rows, timings) = execute(&ctx, &cells, cfg.repeats, cfg.seed, &cfg.newton, cfg.threads, &hash)?;
    Ok(report(ctx, serde_json::to_value(cfg)?, hash, rows, timings))
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.csv`, `report.json` and `timing.csv` into `dir`.
/// The first two are reproducible byte for byte; timings are not.
pub fn write_report(report: &MetricReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_rows(&report.rows, &dir.join("report.csv"))?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    write_rows(&report.timings, &dir.join("timing.csv"))
}
