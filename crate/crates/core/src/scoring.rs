//! Maximum-likelihood fitting and BIC scoring of staged trees.

use serde::{Deserialize, Serialize};

use crate::data::{count_stages, Dataset, StageCounts};
use crate::error::{Error, Result};
use crate::tree::{EventTree, StagedTree, Staging};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub loglik: f64,
    pub dof: usize,
    pub bic: f64,
    pub n: usize,
}

impl Score {
    pub fn new(loglik: f64, dof: usize, n: usize) -> Self {
        Score {
            loglik,
            dof,
            bic: bic(loglik, dof, n),
            n,
        }
    }
}

/// `-2 loglik + dof ln n`; smaller is better.
pub fn bic(loglik: f64, dof: usize, n: usize) -> f64 {
    -2.0 * loglik + dof as f64 * (n as f64).ln()
}

/// Maximized log-likelihood contribution of one count vector,
/// `sum_x n_x ln(n_x / n)` with `0 ln 0 = 0`.
pub fn counts_loglik(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let ln_total = (total as f64).ln();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 * ((c as f64).ln() - ln_total))
        .sum()
}

/// Free parameters: `|X_d| - 1` for every stage at every depth, empty
/// stages included.
pub fn dof(tree: &EventTree, staging: &Staging) -> usize {
    (0..tree.p())
        .map(|d| staging.n_stages(d) * (tree.cardinality(d) - 1))
        .sum()
}

pub fn loglik_of_counts(counts: &StageCounts) -> f64 {
    (0..counts.p())
        .flat_map(|d| (0..counts.n_stages(d)).map(move |s| (d, s)))
        .map(|(d, s)| counts_loglik(counts.stage(d, s)))
        .sum()
}

pub fn score_of_counts(counts: &StageCounts) -> Score {
    let dof = (0..counts.p())
        .map(|d| counts.n_stages(d) * (counts.cardinality(d) - 1))
        .sum();
    Score::new(loglik_of_counts(counts), dof, counts.n() as usize)
}

pub fn log_likelihood(tree: &EventTree, staging: &Staging, data: &Dataset) -> Result<f64> {
    Ok(loglik_of_counts(&count_stages(data, tree, staging)?))
}

pub fn score(tree: &EventTree, staging: &Staging, data: &Dataset) -> Result<Score> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(score_of_counts(&count_stages(data, tree, staging)?))
}

/// Stage probabilities `(n_{s,x} + alpha) / (n_s + alpha |X_d|)`. A stage
/// with no data and `alpha = 0` gets the uniform distribution.
pub fn fit_mle(
    tree: &EventTree,
    staging: &Staging,
    data: &Dataset,
    alpha: f64,
) -> Result<StagedTree> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::NegativeAlpha(alpha));
    }
    let counts = count_stages(data, tree, staging)?;
    fit_from_counts(tree, staging, &counts, alpha)
}

pub fn fit_from_counts(
    tree: &EventTree,
    staging: &Staging,
    counts: &StageCounts,
    alpha: f64,
) -> Result<StagedTree> {
    let params = (0..tree.p())
        .map(|d| {
            (0..staging.n_stages(d))
                .map(|s| stage_estimate(counts.stage(d, s), alpha))
                .collect()
        })
        .collect();
    StagedTree::new(tree.clone(), staging.clone(), params)
}

fn stage_estimate(counts: &[u64], alpha: f64) -> Vec<f64> {
    let c = counts.len() as f64;
    let total = counts.iter().sum::<u64>() as f64 + alpha * c;
    if total == 0.0 {
        return vec![1.0 / c; counts.len()];
    }
    let mut probs: Vec<f64> = counts.iter().map(|&k| (k as f64 + alpha) / total).collect();
    // Renormalize so the closed-simplex check holds to the last bit.
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|q| *q /= sum);
    probs
}
