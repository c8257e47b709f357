//! Permutation-importance baseline with a closed-form ridge regressor; shows
//! the failure mode on synergistic and redundant variables that the
//! information-theoretic criterion handles.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TercError};
use crate::table::SampleTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }
}

/// Regularized least squares in closed form; the intercept is not penalized
/// (data is centered before solving).
pub fn ridge_fit(features: &[Vec<f64>], target: &[f64], lambda: f64) -> Result<RidgeModel> {
    let n = features.len();
    if n == 0 || n != target.len() {
        return Err(TercError::InvalidArgument(
            "ridge needs equal, non-zero numbers of rows and targets".into(),
        ));
    }
    if lambda < 0.0 {
        return Err(TercError::InvalidArgument("lambda must be non-negative".into()));
    }
    let p = features[0].len();
    if features.iter().any(|r| r.len() != p) {
        return Err(TercError::DimensionMismatch("ragged feature rows".into()));
    }
    let mut x_mean = vec![0.0; p];
    for row in features {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let y_mean = target.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |i, j| features[i][j] - x_mean[j]);
    let yc = DVector::from_fn(n, |i, _| target[i] - y_mean);
    let mut gram = xc.transpose() * &xc;
    for j in 0..p {
        gram[(j, j)] += lambda;
    }
    let rhs = xc.transpose() * yc;
    let beta = gram.lu().solve(&rhs).ok_or_else(|| {
        TercError::InvalidArgument(
            "singular normal equations; use lambda > 0 for a unique solution".into(),
        )
    })?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&x_mean)
            .map(|(c, m)| c * m)
            .sum::<f64>();
    Ok(RidgeModel {
        coefficients,
        intercept,
        lambda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiResult {
    pub names: Vec<String>,
    /// Mean score drop per feature over the permutation runs.
    pub importances: Vec<f64>,
    /// Per-feature, per-run score drops.
    pub per_run: Vec<Vec<f64>>,
    pub runs: usize,
    pub alpha: f64,
    pub scoring: Scoring,
    pub base_score: f64,
    /// Upper confidence bound on the injected random column's importance.
    pub null_upper: f64,
    pub significant: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Negative mean squared error; regression targets.
    NegMse,
    /// Fraction of rounded predictions matching the target; discrete targets.
    Accuracy,
}

fn score(model: &RidgeModel, features: &[Vec<f64>], target: &[f64], scoring: Scoring) -> f64 {
    let n = features.len() as f64;
    match scoring {
        Scoring::NegMse => {
            -features
                .iter()
                .zip(target)
                .map(|(x, y)| (model.predict(x) - y).powi(2))
                .sum::<f64>()
                / n
        }
        Scoring::Accuracy => {
            features
                .iter()
                .zip(target)
                .filter(|(x, y)| (model.predict(x).round() - **y).abs() < 0.5)
                .count() as f64
                / n
        }
    }
}

/// Mean score drop per feature when that column is independently shuffled,
/// for a fixed model. Row j of the result is feature j's per-run drops.
pub fn permutation_scores(
    model: &RidgeModel,
    features: &[Vec<f64>],
    target: &[f64],
    scoring: Scoring,
    runs: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let n = features.len();
    let p = features[0].len();
    let base = score(model, features, target, scoring);
    let mut drops = vec![Vec::with_capacity(runs); p];
    for run in 0..runs {
        for j in 0..p {
            if model.coefficients[j] == 0.0 {
                // the prediction cannot depend on this column
                drops[j].push(0.0);
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (run as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (j as u64) << 32,
            );
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let shuffled: Vec<Vec<f64>> = features
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let mut r = row.clone();
                    r[j] = features[perm[i]][j];
                    r
                })
                .collect();
            drops[j].push(base - score(model, &shuffled, target, scoring));
        }
    }
    drops
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn upper_bound(v: &[f64]) -> f64 {
    let m = mean(v);
    if v.len() < 2 {
        return m;
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    m + 2.0 * var.sqrt() / (v.len() as f64).sqrt()
}

/// Breiman-style permutation importance of every state variable for the
/// action, using a ridge model. An injected uniform-{0,1} column provides the
/// null importance bound; features whose lower confidence bound exceeds it
/// are flagged significant.
pub fn permutation_importance(
    table: &SampleTable,
    scoring: Scoring,
    lambda: f64,
    runs: usize,
    alpha: f64,
    seed: u64,
) -> Result<PiResult> {
    if runs == 0 {
        return Err(TercError::InvalidArgument("runs must be at least 1".into()));
    }
    let names = table.variable_names();
    if names.is_empty() {
        return Err(TercError::InvalidArgument("table has no features".into()));
    }
    let action = table.column(table.action_name())?;
    if scoring == Scoring::Accuracy && !action.is_discrete() {
        return Err(TercError::InvalidArgument(
            "accuracy scoring needs a discrete action".into(),
        ));
    }
    let target = action.as_real();
    // several injected noise columns: the null bound is the envelope of
    // their importances, which keeps noise-scale features below it
    const NULLS: usize = 9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7069);
    let rows = table.real_rows(&names)?;
    let features: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|mut r| {
            for _ in 0..NULLS {
                r.push(rng.gen_range(0..2) as f64);
            }
            r
        })
        .collect();
    let model = ridge_fit(&features, &target, lambda)?;
    let base = score(&model, &features, &target, scoring);
    let drops = permutation_scores(&model, &features, &target, scoring, runs, seed);
    let null_upper = drops[names.len()..]
        .iter()
        .map(|d| upper_bound(d))
        .fold(f64::NEG_INFINITY, f64::max);
    let per_run: Vec<Vec<f64>> = drops[..names.len()].to_vec();
    let importances: Vec<f64> = per_run.iter().map(|d| mean(d)).collect();
    let significant: Vec<bool> = per_run
        .iter()
        .map(|d| {
            let m = mean(d);
            let lower = if d.len() < 2 {
                m
            } else {
                let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
                m - 2.0 * var.sqrt() / (d.len() as f64).sqrt()
            };
            lower > null_upper
        })
        .collect();
    Ok(PiResult {
        names,
        importances,
        per_run,
        runs,
        alpha,
        scoring,
        base_score: base,
        null_upper,
        significant,
    })
}
