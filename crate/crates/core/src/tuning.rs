//! K-fold cross-validation over a (λ, η) grid.

use std::io::Write;

use rand::seq::index;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Coefficients, Dataset, HyperParams, Role};
use crate::newton::{self, NewtonConfig};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CVConfig {
    pub k: usize,
    pub lambda_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    pub alpha: f64,
    pub cv_sample_size: usize,
    pub seed: u64,
}

impl Default for CVConfig {
    /// K = 5 on 500 rows, λ ∈ {e⁻³, …, e¹⁰}, η ∈ {0.1, …, 0.9}, α = 10.
    fn default() -> Self {
        Self {
            k: 5,
            lambda_grid: (-3..=10).map(|e| (e as f64).exp()).collect(),
            eta_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            alpha: 10.0,
            cv_sample_size: 500,
            seed: 0,
        }
    }
}

impl CVConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid("cross-validation needs k >= 2"));
        }
        if self.lambda_grid.is_empty() || self.eta_grid.is_empty() {
            return Err(Error::invalid("hyperparameter grids must be nonempty"));
        }
        if self.cv_sample_size < self.k {
            return Err(Error::invalid(format!(
                "cv_sample_size {} leaves an empty fold for k = {}",
                self.cv_sample_size, self.k
            )));
        }
        for &l in &self.lambda_grid {
            for &e in &self.eta_grid {
                HyperParams::new(l, e, self.alpha)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub lambda: f64,
    pub eta: f64,
    /// Held-out mean squared prediction error averaged over folds.
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub best: HyperParams,
    pub table: Vec<ScoreRow>,
    /// Fold id of each CV row, aligned with `rows`.
    pub folds: Vec<usize>,
    /// Indices into the source dataset of the CV subset.
    pub rows: Vec<usize>,
}

/// Draws the CV subset without replacement and assigns folds by a shuffled
/// round-robin, so fold sizes differ by at most one.
pub fn assign_folds(n: usize, cfg: &CVConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if cfg.cv_sample_size > n {
        return Err(Error::invalid(format!("cv_sample_size {} exceeds N = {n}", cfg.cv_sample_size)));
    }
    let mut rng = seed::rng(seed::derive(cfg.seed, &[stream::CV]));
    let mut rows = index::sample(&mut rng, n, cfg.cv_sample_size).into_vec();
    rows.sort_unstable();
    let mut folds: Vec<usize> = (0..rows.len()).map(|i| i % cfg.k).collect();
    folds.shuffle(&mut rng);
    Ok((rows, folds))
}

fn score(subset: &Dataset, folds: &[usize], k: usize, hp: &HyperParams, newton: &NewtonConfig) -> Result<f64> {
    let mut fold_errors = Vec::with_capacity(k);
    for f in 0..k {
        let train: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
        let train = subset.select_rows(&train);
        let test = subset.select_rows(&test);
        let fit = newton::solve_full(&train, hp, &Coefficients::zeros(subset.p(), Role::FullSmooth), newton)?;
        let r = test.residuals(fit.beta.view())?;
        fold_errors.push(linalg::compensated_sum(r.iter().map(|v| v * v)) / r.len() as f64);
    }
    Ok(linalg::compensated_sum(fold_errors) / k as f64)
}

/// Lowest score; ties go to the larger λ, then the smaller η.
pub fn select(table: &[ScoreRow]) -> Option<&ScoreRow> {
    table.iter().min_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(b.lambda.total_cmp(&a.lambda))
            .then(a.eta.total_cmp(&b.eta))
    })
}

/// Grid search scored by held-out MSE; see [`select`] for tie-breaking.
pub fn cross_validate(data: &Dataset, cfg: &CVConfig, newton: &NewtonConfig) -> Result<CvOutcome> {
    cfg.validate()?;
    newton.validate()?;
    let (rows, folds) = assign_folds(data.n(), cfg)?;
    let subset = data.select_rows(&rows);
    let grid: Vec<(f64, f64)> =
        cfg.lambda_grid.iter().flat_map(|&l| cfg.eta_grid.iter().map(move |&e| (l, e))).collect();
    let table = grid
        .par_iter()
        .map(|&(lambda, eta)| {
            let hp = HyperParams::new(lambda, eta, cfg.alpha)?;
            let score = score(&subset, &folds, cfg.k, &hp, newton)?;
            if !score.is_finite() {
                return Err(Error::numerical(format!("non-finite CV score at lambda={lambda}, eta={eta}")));
            }
            Ok(ScoreRow { lambda, eta, score })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = select(&table).expect("grid is nonempty");
    Ok(CvOutcome { best: HyperParams::new(best.lambda, best.eta, cfg.alpha)?, table, folds, rows })
}

pub fn write_score_table<W: Write>(table: &[ScoreRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in table {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{generate, CaseId, SimulationCase};

    fn small_cfg() -> CVConfig {
        CVConfig {
            lambda_grid: vec![0.1, 1.0, 10.0],
            eta_grid: vec![0.2, 0.8],
            cv_sample_size: 200,
            seed: 3,
            ..Default::default()
        }
    }

    fn data() -> Dataset {
        generate(&SimulationCase::new(CaseId::Case1, 1000, 10, 1).unwrap()).unwrap()
    }

    #[test]
    fn default_grid_matches_protocol() {
        let cfg = CVConfig::default();
        assert_eq!(cfg.lambda_grid.len(), 14);
        assert!((cfg.lambda_grid[0] - (-3f64).exp()).abs() < 1e-15);
        assert_eq!(cfg.eta_grid.len(), 9);
        assert_eq!(cfg.k, 5);
    }

    #[test]
    fn folds_are_a_disjoint_balanced_cover() {
        let cfg = small_cfg();
        let (rows, folds) = assign_folds(1000, &cfg).unwrap();
        assert_eq!(rows.len(), 200);
        let mut uniq = rows.clone();
        uniq.dedup();
        assert_eq!(uniq.len(), 200);
        for f in 0..cfg.k {
            assert_eq!(folds.iter().filter(|&&v| v == f).count(), 40);
        }
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let cfg = CVConfig { lambda_grid: vec![2.0], eta_grid: vec![0.3], ..small_cfg() };
        let out = cross_validate(&data(), &cfg, &NewtonConfig::default()).unwrap();
        assert_eq!((out.best.lambda, out.best.eta), (2.0, 0.3));
        assert_eq!(out.table.len(), 1);
    }

    #[test]
    fn duplicated_points_score_identically_and_table_is_reproducible() {
        let cfg = CVConfig { lambda_grid: vec![1.0, 1.0], ..small_cfg() };
        let a = cross_validate(&data(), &cfg, &NewtonConfig::default()).unwrap();
        assert_eq!(a.table.len(), 4);
        assert_eq!(a.table[0].score, a.table[2].score);
        let b = cross_validate(&data(), &cfg, &NewtonConfig::default()).unwrap();
        assert_eq!(a.table, b.table);
        assert!(a.table.iter().all(|r| r.score.is_finite()));
    }

    #[test]
    fn ties_prefer_stronger_regularization() {
        let table = [
            ScoreRow { lambda: 1.0, eta: 0.5, score: 1.0 },
            ScoreRow { lambda: 2.0, eta: 0.7, score: 1.0 },
            ScoreRow { lambda: 2.0, eta: 0.3, score: 1.0 },
        ];
        let best = select(&table).unwrap();
        assert_eq!((best.lambda, best.eta), (2.0, 0.3));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let d = data();
        let n = NewtonConfig::default();
        assert!(cross_validate(&d, &CVConfig { k: 1, ..small_cfg() }, &n).is_err());
        assert!(cross_validate(&d, &CVConfig { eta_grid: vec![1.0], ..small_cfg() }, &n).is_err());
        assert!(cross_validate(&d, &CVConfig { cv_sample_size: 5000, ..small_cfg() }, &n).is_err());
        assert!(cross_validate(&d, &CVConfig { cv_sample_size: 3, ..small_cfg() }, &n).is_err());
    }

    #[test]
    fn score_table_exports_as_csv() {
        let mut buf = Vec::new();
        write_score_table(&[ScoreRow { lambda: 1.0, eta: 0.5, score: 2.5 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "lambda,eta,score\n1.0,0.5,2.5\n");
    }
}
