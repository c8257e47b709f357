//! Information-theoretic measures.
//!
//! Exact plug-in estimators over empirical symbol frequencies (the oracle
//! everything else is checked against) plus a neural MI estimator trained on
//! the Donsker-Varadhan bound, composed into the per-variable measure `phi`.
//! All values are in nats.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TercError};
use crate::neural::{mlp_forward, mlp_grad, mlp_init, opt_step, Activation, Layout, Loss, OptimState};
use crate::table::SampleTable;

/// Joint plug-in entropy of one or more aligned discrete columns.
/// H = -sum p log p over observed joint symbol tuples; zero-count cells
/// contribute nothing. An empty column list has entropy 0.
pub fn plugin_entropy(cols: &[&[i64]]) -> Result<f64> {
    if cols.is_empty() {
        return Ok(0.0);
    }
    let n = cols[0].len();
    if n == 0 {
        return Err(TercError::InvalidArgument("empty columns".into()));
    }
    if cols.iter().any(|c| c.len() != n) {
        return Err(TercError::DimensionMismatch(
            "entropy columns have unequal length".into(),
        ));
    }
    // BTreeMap keeps the summation order stable, so repeated runs produce
    // bit-identical entropies.
    let mut counts: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for r in 0..n {
        let key: Vec<i64> = cols.iter().map(|c| c[r]).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    let n = n as f64;
    Ok(counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}

/// H(target | given) = H(target, given) - H(given).
pub fn plugin_cond_entropy(target: &[&[i64]], given: &[&[i64]]) -> Result<f64> {
    let joint: Vec<&[i64]> = target.iter().chain(given.iter()).cloned().collect();
    Ok(plugin_entropy(&joint)? - plugin_entropy(given)?)
}

/// I(X;Y) = H(X) + H(Y) - H(X,Y).
pub fn plugin_mi(x: &[&[i64]], y: &[&[i64]]) -> Result<f64> {
    let joint: Vec<&[i64]> = x.iter().chain(y.iter()).cloned().collect();
    Ok(plugin_entropy(x)? + plugin_entropy(y)? - plugin_entropy(&joint)?)
}

fn lagged(series: &[i64]) -> (Vec<i64>, Vec<i64>) {
    // (current, previous) pairs over t = 1..len
    (series[1..].to_vec(), series[..series.len() - 1].to_vec())
}

/// Transfer entropy from `source` to `dest` in the entropy form:
/// TE = H(X^t | X^{t-1}) - H(X^t | X^{t-1}, Y^{t-1}).
pub fn plugin_transfer_entropy(source: &[i64], dest: &[i64]) -> Result<f64> {
    if source.len() != dest.len() {
        return Err(TercError::DimensionMismatch("series length mismatch".into()));
    }
    if dest.len() < 2 {
        return Err(TercError::InvalidArgument("series shorter than 2".into()));
    }
    let (x_cur, x_prev) = lagged(dest);
    let y_prev = source[..source.len() - 1].to_vec();
    let h1 = plugin_cond_entropy(&[&x_cur], &[&x_prev])?;
    let h2 = plugin_cond_entropy(&[&x_cur], &[&x_prev, &y_prev])?;
    Ok(h1 - h2)
}

/// Same quantity in the MI form: TE = I(X^t; X^{t-1}, Y^{t-1}) - I(X^t; X^{t-1}).
pub fn plugin_transfer_entropy_mi_form(source: &[i64], dest: &[i64]) -> Result<f64> {
    if source.len() != dest.len() {
        return Err(TercError::DimensionMismatch("series length mismatch".into()));
    }
    if dest.len() < 2 {
        return Err(TercError::InvalidArgument("series shorter than 2".into()));
    }
    let (x_cur, x_prev) = lagged(dest);
    let y_prev = source[..source.len() - 1].to_vec();
    let i1 = plugin_mi(&[&x_cur], &[&x_prev, &y_prev])?;
    let i2 = plugin_mi(&[&x_cur], &[&x_prev])?;
    Ok(i1 - i2)
}

/// Conditional redundancy: sum_i H(Z|X_i) - H(Z|X_1..X_N), N >= 2.
pub fn conditional_redundancy(target: &[&[i64]], vars: &[&[i64]]) -> Result<f64> {
    if vars.len() < 2 {
        return Err(TercError::InvalidArgument(
            "conditional redundancy needs at least 2 variables".into(),
        ));
    }
    let mut sum = 0.0;
    for v in vars {
        sum += plugin_cond_entropy(target, &[v])?;
    }
    Ok(sum - plugin_cond_entropy(target, vars)?)
}

/// Synergy: I(Z;X) - sum_i I(Z;X_i).
pub fn synergy(target: &[&[i64]], vars: &[&[i64]]) -> Result<f64> {
    if vars.is_empty() {
        return Err(TercError::InvalidArgument("empty variable list".into()));
    }
    let joint = plugin_mi(target, vars)?;
    let mut sum = 0.0;
    for v in vars {
        sum += plugin_mi(target, &[v])?;
    }
    Ok(joint - sum)
}

/// Configuration for the neural MI estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch: usize,
    pub iters: usize,
    pub seed: u64,
    pub runs: usize,
}

impl Default for MineConfig {
    fn default() -> Self {
        MineConfig {
            hidden: 50,
            learning_rate: 0.01,
            batch: 256,
            iters: 2000,
            seed: 0,
            runs: 10,
        }
    }
}

impl MineConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.hidden == 0 || self.batch == 0 || self.iters == 0 || self.runs == 0 {
            return Err(TercError::Config("mine config fields must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(TercError::Config("mine learning rate must be positive".into()));
        }
        if self.batch > n {
            return Err(TercError::Config(format!(
                "minibatch {} exceeds sample count {n}",
                self.batch
            )));
        }
        Ok(())
    }
}

fn dv_value(scores_joint: &[f64], scores_marginal: &[f64]) -> f64 {
    let mean_joint = scores_joint.iter().sum::<f64>() / scores_joint.len() as f64;
    let max = scores_marginal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lme = max
        + (scores_marginal.iter().map(|&s| (s - max).exp()).sum::<f64>()
            / scores_marginal.len() as f64)
            .ln();
    mean_joint - lme
}

/// Neural MI estimate I(X;Y) on joint rows, trained on the Donsker-Varadhan
/// bound. Marginal minibatches are formed by permuting `y` within the batch.
/// The returned value is the bound evaluated on the full sample with the
/// parameters from the final iteration.
pub fn mine_mi(x_rows: &[Vec<f64>], y: &[f64], cfg: &MineConfig) -> Result<f64> {
    let n = x_rows.len();
    if n == 0 || y.len() != n {
        return Err(TercError::DimensionMismatch("mine_mi input shapes".into()));
    }
    cfg.validate(n)?;
    let x_dim = x_rows[0].len();
    let layout = Layout::new(
        vec![x_dim + 1, cfg.hidden, 1],
        vec![Activation::Relu, Activation::Linear],
    )?;
    let mut params = mlp_init::<f64>(&layout, cfg.seed)?;
    let mut opt = OptimState::adam(cfg.learning_rate, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);

    // inputs are standardized per dimension so the fixed init scale works
    // across very different variable ranges
    let (shift, scale) = standardize_stats(x_rows, y);
    let row = |i: usize, yv: f64| -> Vec<f64> {
        let mut v: Vec<f64> = x_rows[i]
            .iter()
            .enumerate()
            .map(|(d, &x)| (x - shift[d]) / scale[d])
            .collect();
        v.push((yv - shift[x_dim]) / scale[x_dim]);
        v
    };

    let b = cfg.batch;
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(2 * b);
    let targets: Vec<Vec<f64>> = (0..2 * b)
        .map(|i| vec![if i < b { 1.0 } else { 0.0 }])
        .collect();
    for it in 0..cfg.iters {
        inputs.clear();
        let idx: Vec<usize> = (0..b).map(|_| rng.gen_range(0..n)).collect();
        for &i in &idx {
            inputs.push(row(i, y[i]));
        }
        // marginal: same x rows, action column permuted within the batch
        let mut perm = idx.clone();
        perm.shuffle(&mut rng);
        for (k, &i) in idx.iter().enumerate() {
            inputs.push(row(i, y[perm[k]]));
        }
        let (grad, loss) = mlp_grad(&params, &inputs, &targets, Loss::Dv)
            .map_err(|_| TercError::Diverged { iteration: it })?;
        if !loss.is_finite() {
            return Err(TercError::Diverged { iteration: it });
        }
        opt_step(&mut params, &grad, &mut opt)
            .map_err(|_| TercError::Diverged { iteration: it })?;
    }

    // final estimate over the full sample
    let mut joint_scores = Vec::with_capacity(n);
    for i in 0..n {
        joint_scores.push(mlp_forward(&params, &row(i, y[i]))?[0]);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut marg_scores = Vec::with_capacity(n);
    for i in 0..n {
        marg_scores.push(mlp_forward(&params, &row(i, y[perm[i]]))?[0]);
    }
    let est = dv_value(&joint_scores, &marg_scores);
    if !est.is_finite() {
        return Err(TercError::Diverged { iteration: cfg.iters });
    }
    Ok(est)
}

fn standardize_stats(x_rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x_rows.len() as f64;
    let d = x_rows[0].len();
    let mut shift = vec![0.0; d + 1];
    let mut scale = vec![0.0; d + 1];
    for j in 0..d {
        let mean = x_rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = x_rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        shift[j] = mean;
        scale[j] = var.sqrt().max(1e-12);
    }
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    shift[d] = mean;
    scale[d] = var.sqrt().max(1e-12);
    (shift, scale)
}

/// Which estimator backs a `phi` evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Estimator {
    Plugin,
    Mine(MineConfig),
}

/// Repeated-run estimate of the measure for one variable or subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    pub target: Vec<String>,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl PhiEstimate {
    pub fn from_values(target: Vec<String>, values: Vec<f64>) -> Self {
        let runs = values.len();
        assert!(runs >= 1);
        let mean = values.iter().sum::<f64>() / runs as f64;
        let std = if runs > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        let half = 2.0 * std / (runs as f64).sqrt();
        PhiEstimate {
            target,
            values,
            mean,
            std,
            lower: mean - half,
            upper: mean + half,
        }
    }

    pub fn runs(&self) -> usize {
        self.values.len()
    }
}

// Deterministic 64-bit FNV-1a over the context key, used to derive per-run,
// per-column-set seeds that are stable across processes.
fn stable_hash(parts: &[&str], seed: u64, run: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    };
    for p in parts {
        eat(p.as_bytes());
        eat(&[0xff]);
    }
    eat(&seed.to_le_bytes());
    eat(&(run as u64).to_le_bytes());
    h
}

/// Per-run I(cols ; action) estimates. Plugin runs are identical by
/// construction; neural runs differ by their derived seeds.
pub fn mi_with_action(
    table: &SampleTable,
    cols: &[String],
    estimator: &Estimator,
    runs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if runs == 0 {
        return Err(TercError::InvalidArgument("runs must be >= 1".into()));
    }
    match estimator {
        Estimator::Plugin => {
            let action = table.discrete_or_quantized(table.action_name())?;
            let sym_cols: Vec<Vec<i64>> = cols
                .iter()
                .map(|c| table.discrete_or_quantized(c))
                .collect::<Result<_>>()?;
            let refs: Vec<&[i64]> = sym_cols.iter().map(|c| c.as_slice()).collect();
            let value = plugin_mi(&refs, &[&action])?;
            Ok(vec![value; runs])
        }
        Estimator::Mine(cfg) => {
            if cols.is_empty() {
                return Ok(vec![0.0; runs]);
            }
            let x_rows = table.real_rows(cols)?;
            let y = table.column(table.action_name())?.as_real();
            let mut values = Vec::with_capacity(runs);
            for run in 0..runs {
                let parts: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
                let mut cfg_run = cfg.clone();
                cfg_run.seed = stable_hash(&parts, seed ^ cfg.seed, run);
                cfg_run.batch = cfg.batch.min(x_rows.len());
                values.push(mine_mi(&x_rows, &y, &cfg_run).map_err(|e| TercError::Estimator {
                    context: format!("mine_mi({})", cols.join(",")),
                    message: e.to_string(),
                })?);
            }
            Ok(values)
        }
    }
}

/// The measure for subset `s` inside context set `c` (s must be contained in
/// c): per-run `I(c;A) - I(c\s;A)`. In plugin mode this equals the exact
/// `H(A|c\s) - H(A|c)` and the runs collapse to one identical value.
pub fn phi_measure(
    table: &SampleTable,
    s: &[String],
    c: &[String],
    estimator: &Estimator,
    runs: usize,
    seed: u64,
) -> Result<PhiEstimate> {
    if s.is_empty() {
        return Err(TercError::InvalidArgument("empty subset".into()));
    }
    for v in s {
        if !c.contains(v) {
            return Err(TercError::InvalidArgument(format!(
                "subset member {v:?} not in the context set"
            )));
        }
    }
    let rest: Vec<String> = c.iter().filter(|v| !s.contains(v)).cloned().collect();
    match estimator {
        Estimator::Plugin => {
            let action = table.discrete_or_quantized(table.action_name())?;
            let full: Vec<Vec<i64>> = c
                .iter()
                .map(|v| table.discrete_or_quantized(v))
                .collect::<Result<_>>()?;
            let reduced: Vec<Vec<i64>> = rest
                .iter()
                .map(|v| table.discrete_or_quantized(v))
                .collect::<Result<_>>()?;
            let full_refs: Vec<&[i64]> = full.iter().map(|v| v.as_slice()).collect();
            let red_refs: Vec<&[i64]> = reduced.iter().map(|v| v.as_slice()).collect();
            let phi = plugin_cond_entropy(&[&action], &red_refs)?
                - plugin_cond_entropy(&[&action], &full_refs)?;
            Ok(PhiEstimate::from_values(s.to_vec(), vec![phi; runs]))
        }
        Estimator::Mine(_) => {
            let with = mi_with_action(table, c, estimator, runs, seed)?;
            let without = mi_with_action(table, &rest, estimator, runs, seed)?;
            let values: Vec<f64> = with.iter().zip(&without).map(|(a, b)| a - b).collect();
            Ok(PhiEstimate::from_values(s.to_vec(), values))
        }
    }
}
