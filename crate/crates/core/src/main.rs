use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use subsample_enet::algorithms::{self, TwoStepConfig};
use subsample_enet::harness::experiment::{self, Prepared, SCHEMA_VERSION};
use subsample_enet::harness::{self, ExperimentConfig, HpChoice, SourceSpec, SweepConfig};
use subsample_enet::model::HyperParams;
use subsample_enet::newton::NewtonConfig;
use subsample_enet::simgen::{self, CaseId, SimulationCase};
use subsample_enet::ssp;
use subsample_enet::strategy::MethodKind;
use subsample_enet::tuning::{self, CVConfig};
use subsample_enet::Result;

#[derive(Parser)]
#[command(version, about = "Optimal-subsampling smooth elastic-net regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the smooth elastic net on the full data.
    Solve(FitArgs),
    /// One subsampled fit with a uniform, BLEV or POSP plan.
    Subsample(SubsampleArgs),
    /// The two-step POSP estimator.
    Twostep(TwoStepArgs),
    /// K-fold cross-validation over the (lambda, eta) grid.
    Cv(CvArgs),
    /// Write a simulated dataset as CSV.
    Simulate(SimulateArgs),
    /// Repeated-subsampling benchmark against the full-data fit.
    Bench(BenchArgs),
    /// Pilot-share sweep at a fixed total budget.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Simulation case (case1..case4); ignored when --data is given.
    #[arg(long, default_value = "case1")]
    case: CaseId,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    p: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training CSV instead of a simulation.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Test CSV for MAE, Re and Hit-k.
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    target: String,
    #[arg(long)]
    add_intercept: bool,
    #[arg(long)]
    standardize: bool,
    /// Group label column of the test CSV, e.g. the day for Hit-k.
    #[arg(long)]
    group_column: Option<String>,
    #[arg(long)]
    hit_k: Option<usize>,
    /// Rows of the simulated test set.
    #[arg(long, default_value_t = 1000)]
    test_n: usize,
}

impl DataArgs {
    fn source(&self) -> SourceSpec {
        match &self.data {
            Some(path) => SourceSpec::Csv {
                path: path.clone(),
                test_path: self.test_data.clone(),
                target: self.target.clone(),
                add_intercept: self.add_intercept,
                standardize: self.standardize,
                group_column: self.group_column.clone(),
                hit_k: self.hit_k,
            },
            None => {
                let mut spec = SourceSpec::simulation(self.case, self.n, self.p, self.seed);
                if let SourceSpec::Simulation { test_n, .. } = &mut spec {
                    *test_n = self.test_n;
                }
                spec
            }
        }
    }

    fn load(&self) -> Result<Prepared> {
        experiment::prepare(&self.source())
    }
}

#[derive(Args, Clone)]
struct HpArgs {
    /// Regularization weight, or `cv` to select (lambda, eta) by cross-validation.
    #[arg(long, default_value = "1", value_parser = parse_lambda)]
    lambda: Lambda,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
}

#[derive(Clone, Copy)]
enum Lambda {
    Value(f64),
    Cv,
}

fn parse_lambda(s: &str) -> std::result::Result<Lambda, String> {
    if s.eq_ignore_ascii_case("cv") {
        return Ok(Lambda::Cv);
    }
    s.parse().map(Lambda::Value).map_err(|_| format!("expected a number or `cv`, got '{s}'"))
}

impl HpArgs {
    fn choice(&self, seed: u64) -> Result<HpChoice> {
        match self.lambda {
            Lambda::Cv => Ok(HpChoice::Cv(CVConfig { alpha: self.alpha, seed, ..Default::default() })),
            Lambda::Value(lambda) => Ok(HpChoice::Fixed(HyperParams::new(lambda, self.eta, self.alpha)?)),
        }
    }

    fn resolve(&self, data: &Prepared, seed: u64) -> Result<HyperParams> {
        match self.choice(seed)? {
            HpChoice::Fixed(hp) => Ok(hp),
            HpChoice::Cv(cv) => Ok(tuning::cross_validate(&data.train, &cv, &NewtonConfig::default())?.best),
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hp: HpArgs,
    /// Also write the JSON result to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SubsampleArgs {
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, default_value = "uniform")]
    method: MethodKind,
    #[arg(long, default_value_t = 1000)]
    c: usize,
}

#[derive(Args)]
struct TwoStepArgs {
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, default_value_t = 1000)]
    c0: usize,
    #[arg(long, default_value_t = 1000)]
    c: usize,
    #[arg(long, default_value_t = 0.0)]
    mix_gamma: f64,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 500)]
    cv_size: usize,
    /// Score table CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "case1")]
    case: CaseId,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "y")]
    target: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hp: HpArgs,
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    #[arg(long, default_value_t = 0.0)]
    mix_gamma: f64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for report.csv, report.json and timing.csv.
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn threads(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "uniform,blev,posp")]
    method: Vec<MethodKind>,
    /// Comma-separated second-stage sizes.
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    c: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    c0: usize,
    /// Give uniform and BLEV the two-step budget C + C0.
    #[arg(long)]
    match_budget: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Total subsample size C + C0.
    #[arg(long, default_value_t = 5000)]
    budget: usize,
}

#[derive(Serialize)]
struct FitOutput<'a> {
    schema_version: u32,
    command: &'a str,
    hyperparams: HyperParams,
    beta: Vec<f64>,
    iterations: usize,
    converged: bool,
    final_grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}

fn emit<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    if let Some(path) = out {
        std::fs::write(path, text + "\n")?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Solve(args) => {
            let data = args.data.load()?;
            let hp = args.hp.resolve(&data, args.data.seed)?;
            let rep = algorithms::full_reference(&data.train, &hp, &NewtonConfig::default())?;
            emit(
                &FitOutput {
                    schema_version: SCHEMA_VERSION,
                    command: "solve",
                    hyperparams: hp,
                    beta: rep.beta.beta.to_vec(),
                    iterations: rep.iterations,
                    converged: rep.converged,
                    final_grad_norm: rep.final_grad_norm,
                    extra: None,
                },
                args.out.as_ref(),
            )
        }
        Command::Subsample(args) => {
            let d = &args.fit.data;
            let data = d.load()?;
            let hp = args.fit.hp.resolve(&data, d.seed)?;
            let newton = NewtonConfig::default();
            let plan = match args.method {
                MethodKind::Uniform => ssp::uniform_ssp(data.train.n())?,
                MethodKind::Blev => ssp::blev_ssp(&data.train)?,
                MethodKind::Posp => {
                    let full = algorithms::full_reference(&data.train, &hp, &newton)?;
                    ssp::posp_ssp(&data.train, full.beta.view(), &hp)?
                }
            };
            let rep = algorithms::run_algorithm1(&data.train, &plan, args.c, &hp, &newton, d.seed)?;
            emit(
                &FitOutput {
                    schema_version: SCHEMA_VERSION,
                    command: "subsample",
                    hyperparams: hp,
                    beta: rep.beta.beta.to_vec(),
                    iterations: rep.iterations,
                    converged: rep.converged,
                    final_grad_norm: rep.final_grad_norm,
                    extra: Some(json!({ "method": args.method, "c": args.c })),
                },
                args.fit.out.as_ref(),
            )
        }
        Command::Twostep(args) => {
            let d = &args.fit.data;
            let data = d.load()?;
            let hp = args.fit.hp.resolve(&data, d.seed)?;
            let cfg = TwoStepConfig { mix_gamma: args.mix_gamma, ..TwoStepConfig::new(args.c0, args.c, d.seed) };
            let res = algorithms::run_two_step(&data.train, &hp, &cfg)?;
            emit(
                &FitOutput {
                    schema_version: SCHEMA_VERSION,
                    command: "twostep",
                    hyperparams: hp,
                    beta: res.beta_final.beta.to_vec(),
                    iterations: res.final_report.iterations,
                    converged: res.final_report.converged,
                    final_grad_norm: res.final_report.final_grad_norm,
                    extra: Some(json!({
                        "c0": args.c0,
                        "c": args.c,
                        "beta_pilot": res.beta_pilot.beta.to_vec(),
                        "pilot_iterations": res.pilot_report.iterations,
                    })),
                },
                args.fit.out.as_ref(),
            )
        }
        Command::Cv(args) => {
            let data = args.data.load()?;
            let cfg = CVConfig {
                k: args.folds,
                alpha: args.alpha,
                cv_sample_size: args.cv_size,
                seed: args.data.seed,
                ..Default::default()
            };
            let out = tuning::cross_validate(&data.train, &cfg, &NewtonConfig::default())?;
            if let Some(path) = &args.out {
                tuning::write_score_table(&out.table, std::fs::File::create(path)?)?;
            }
            emit(&json!({ "schema_version": SCHEMA_VERSION, "command": "cv", "best": out.best }), None)
        }
        Command::Simulate(args) => {
            let data = simgen::generate(&SimulationCase::new(args.case, args.n, args.p, args.seed)?)?;
            harness::save_csv(&args.out, &data, &args.target)
        }
        Command::Bench(args) => {
            let r = &args.run;
            let cfg = ExperimentConfig {
                methods: args.method.clone(),
                c_grid: args.c.clone(),
                c0: args.c0,
                repeats: r.repeats,
                hp: r.hp.choice(r.data.seed)?,
                seed: r.data.seed,
                mix_gamma: r.mix_gamma,
                match_budget: args.match_budget,
                threads: r.threads(),
                ..ExperimentConfig::new(r.data.source(), HyperParams::new(1.0, 0.5, 10.0)?)
            };
            let report = harness::run_experiment(&cfg)?;
            harness::write_report(&report, &r.out)
        }
        Command::Sweep(args) => {
            let r = &args.run;
            let cfg = SweepConfig {
                repeats: r.repeats,
                hp: r.hp.choice(r.data.seed)?,
                seed: r.data.seed,
                mix_gamma: r.mix_gamma,
                threads: r.threads(),
                ..SweepConfig::new(r.data.source(), HyperParams::new(1.0, 0.5, 10.0)?, args.budget)
            };
            let report = harness::run_proportion_sweep(&cfg)?;
            harness::write_report(&report, &r.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
