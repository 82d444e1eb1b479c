//! Optimal-subsampling elastic-net regression.
//!
//! The crate fits a smooth elastic-net criterion, where the L1 term is replaced
//! by the α-absolute surrogate, with a damped Newton solver. On top of that it
//! provides weighted subsampling estimators driven by uniform, leverage-score
//! (BLEV) or pseudo-optimal (POSP) sampling probabilities, the two-step POSP
//! algorithm, sandwich-variance diagnostics and a reproducible experiment
//! harness.
//!
//! ```no_run
//! use subsample_enet::{algorithms, model::HyperParams, newton::NewtonConfig, simgen};
//!
//! let case = simgen::SimulationCase::new(simgen::CaseId::Case1, 20_000, 20, 7).unwrap();
//! let data = simgen::generate(&case).unwrap();
//! let hp = HyperParams::new(1.0, 0.5, 10.0).unwrap();
//! let cfg = algorithms::TwoStepConfig::new(500, 2000, 11);
//! let result = algorithms::run_two_step(&data, &hp, &cfg).unwrap();
//! println!("{:?}", result.beta_final.beta);
//! # let _ = NewtonConfig::default();
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod asymptotics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod newton;
pub mod seed;
pub mod simgen;
pub mod ssp;
pub mod strategy;
pub mod tuning;

pub use error::{Error, Result};
