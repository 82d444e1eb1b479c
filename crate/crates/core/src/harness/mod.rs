//! Data ingestion, metrics and experiment orchestration behind the CLI.

pub mod experiment;
pub mod io;
pub mod metrics;

pub use experiment::{
    run_experiment, run_proportion_sweep, write_report, ExperimentConfig, HpChoice, MetricReport, ReportRow,
    SourceSpec, SweepConfig,
};
pub use io::{load_csv, save_csv, LoadOptions};
