//! Accuracy metrics. Sums are compensated so aggregates do not depend on
//! the order results arrive in.

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::linalg::compensated_sum;
use crate::model::{Coefficients, Dataset};

fn check_dims(estimates: &[Coefficients], reference: &Coefficients) -> Result<()> {
    if estimates.is_empty() {
        return Err(Error::invalid("metric needs at least one estimate"));
    }
    if let Some(e) = estimates.iter().find(|e| e.len() != reference.len()) {
        return Err(Error::invalid(format!("estimate has length {} but reference has {}", e.len(), reference.len())));
    }
    Ok(())
}

pub fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
}

/// (1/M) Σ ‖β⁽ᵏ⁾ − β_ref‖².
pub fn mse(estimates: &[Coefficients], reference: &Coefficients) -> Result<f64> {
    check_dims(estimates, reference)?;
    let total = compensated_sum(estimates.iter().map(|e| squared_distance(e.view(), reference.view())));
    Ok(total / estimates.len() as f64)
}

fn rss(test: &Dataset, beta: ArrayView1<f64>) -> Result<f64> {
    let r = test.residuals(beta)?;
    Ok(compensated_sum(r.iter().map(|v| v * v)))
}

/// (1/M) Σ ‖X β⁽ᵏ⁾ − Y‖² / ‖X β_ref − Y‖² − 1 on a test set.
pub fn re(estimates: &[Coefficients], reference: &Coefficients, test: &Dataset) -> Result<f64> {
    check_dims(estimates, reference)?;
    let denom = rss(test, reference.view())?;
    if denom <= 0.0 {
        return Err(Error::invalid("reference fits the test set exactly; relative error undefined"));
    }
    let ratios = estimates.iter().map(|e| rss(test, e.view()).map(|v| v / denom)).collect::<Result<Vec<_>>>()?;
    Ok(compensated_sum(ratios) / estimates.len() as f64 - 1.0)
}

/// Mean |xᵀβ − y| over a test set.
pub fn mae(beta: &Coefficients, test: &Dataset) -> Result<f64> {
    let r = test.residuals(beta.view())?;
    Ok(compensated_sum(r.iter().map(|v| v.abs())) / r.len() as f64)
}

/// Indices of the k largest values; equal values keep their row order.
fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Overlap of predicted and true top-k for one group.
pub fn hit_k_single(predicted: &[f64], truth: &[f64], k: usize) -> Result<usize> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid("predicted and true scores differ in length"));
    }
    if k == 0 || predicted.len() < k {
        return Err(Error::invalid(format!("group has {} items, fewer than k = {k}", predicted.len())));
    }
    let truth_top = top_k(truth, k);
    Ok(top_k(predicted, k).iter().filter(|i| truth_top.contains(i)).count())
}

/// Hit-k averaged over groups, e.g. one group per day.
pub fn hit_k(groups: &[(&[f64], &[f64])], k: usize) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::invalid("hit-k needs at least one group"));
    }
    let hits = groups.iter().map(|(p, t)| hit_k_single(p, t, k).map(|h| h as f64)).collect::<Result<Vec<_>>>()?;
    Ok(compensated_sum(hits) / groups.len() as f64)
}

/// Hit-k with rows split by a label column; groups appear in first-seen order.
pub fn hit_k_by_label(predicted: &[f64], truth: &[f64], labels: &[String], k: usize) -> Result<f64> {
    if predicted.len() != labels.len() || truth.len() != labels.len() {
        return Err(Error::invalid("labels, predictions and truth must have equal length"));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut split: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for ((p, t), l) in predicted.iter().zip(truth).zip(labels) {
        let g = match order.iter().position(|o| *o == l) {
            Some(g) => g,
            None => {
                order.push(l);
                split.push((Vec::new(), Vec::new()));
                split.len() - 1
            }
        };
        split[g].0.push(*p);
        split[g].1.push(*t);
    }
    let views: Vec<(&[f64], &[f64])> = split.iter().map(|(p, t)| (p.as_slice(), t.as_slice())).collect();
    hit_k(&views, k)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (n - 1.0)).sqrt())
}
