//! Variable subset selection on top of the `phi` measure: the naive
//! criterion, the full redundancy-robust search, the linear-time variant,
//! and null-model significance testing.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TercError};
use crate::estimators::{phi_measure, Estimator, PhiEstimate};
use crate::table::SampleTable;

pub const NULL_COLUMN: &str = "__null__";
pub const POWER_SET_GUARD: usize = 20;

/// Statistics of the injected-random-variable measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModel {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub upper: f64,
}

impl NullModel {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(TercError::InvalidArgument(
                "null model needs at least 2 runs".into(),
            ));
        }
        let est = PhiEstimate::from_values(vec![NULL_COLUMN.into()], values);
        Ok(NullModel {
            values: est.values,
            mean: est.mean,
            std: est.std,
            upper: est.upper,
        })
    }

    pub fn runs(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum ToleranceConfig {
    /// |a - b| <= epsilon comparisons; for exact estimators.
    Exact { epsilon: f64 },
    /// Null-bound significance and confidence-interval overlap; for noisy
    /// estimators.
    Statistical,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig::Exact { epsilon: 1e-9 }
    }
}

impl ToleranceConfig {
    pub fn exact(epsilon: f64) -> Result<Self> {
        if epsilon <= 0.0 {
            return Err(TercError::Config("epsilon must be positive".into()));
        }
        Ok(ToleranceConfig::Exact { epsilon })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmTag {
    Naive,
    Alg1,
    Alg2,
}

/// One entry in the selection audit log, in evaluation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub step: usize,
    pub target: Vec<String>,
    pub phi_mean: f64,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<String>,
    pub estimates: Vec<PhiEstimate>,
    pub null_model: Option<NullModel>,
    pub algorithm: AlgorithmTag,
    pub decisions: Vec<Decision>,
}

impl SelectionResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Bayesian-network rendering: one edge per selected variable into the
    /// action node.
    pub fn to_dot(&self, action: &str) -> String {
        let mut out = String::from("digraph terc {\n");
        for v in &self.selected {
            out.push_str(&format!("  \"{v}\" -> \"{action}\";\n"));
        }
        out.push_str("}\n");
        out
    }
}

/// True iff the variable's lower confidence bound exceeds the null model's
/// upper bound. Both sides must come from the same number of runs.
pub fn is_significant(phi: &PhiEstimate, null: &NullModel) -> Result<bool> {
    if phi.runs() != null.runs() {
        return Err(TercError::InvalidArgument(format!(
            "phi has {} runs, null model has {}",
            phi.runs(),
            null.runs()
        )));
    }
    Ok(phi.lower > null.upper)
}

/// Appends a seeded uniform-{0,1} column and measures phi for it `runs` times.
pub fn null_bound(
    table: &SampleTable,
    estimator: &Estimator,
    runs: usize,
    seed: u64,
) -> Result<NullModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e75_6c6c);
    let nm: Vec<i64> = (0..table.n()).map(|_| rng.gen_range(0..2)).collect();
    let extended = table.with_column(NULL_COLUMN, nm)?;
    let mut context = extended.variable_names();
    context.sort(); // stable evaluation order
    let phi = phi_measure(
        &extended,
        &[NULL_COLUMN.to_string()],
        &context,
        estimator,
        runs,
        seed,
    )?;
    NullModel::from_values(phi.values)
}

struct Session<'a> {
    table: &'a SampleTable,
    tol: ToleranceConfig,
    estimator: &'a Estimator,
    runs: usize,
    seed: u64,
    null: Option<NullModel>,
    /// Statistical-mode null bounds per evaluation context: the injected
    /// variable must be measured in the same joint dimensionality as the
    /// tested one, or the estimator's dimension bias shifts the bound.
    context_nulls: BTreeMap<Vec<String>, NullModel>,
    decisions: Vec<Decision>,
    estimates: Vec<PhiEstimate>,
}

impl<'a> Session<'a> {
    fn new(
        table: &'a SampleTable,
        tol: ToleranceConfig,
        estimator: &'a Estimator,
        seed: u64,
    ) -> Result<Self> {
        let runs = match estimator {
            Estimator::Plugin => 1,
            Estimator::Mine(cfg) => cfg.runs,
        };
        let null = match tol {
            ToleranceConfig::Exact { .. } => None,
            ToleranceConfig::Statistical => {
                // the null column's phi must be comparable run-for-run
                Some(null_bound(table, estimator, runs.max(2), seed)?)
            }
        };
        let mut context_nulls = BTreeMap::new();
        if let Some(n) = &null {
            let mut full = table.variable_names();
            full.sort();
            context_nulls.insert(full, n.clone());
        }
        Ok(Session {
            table,
            tol,
            estimator,
            runs,
            seed,
            null,
            context_nulls,
            decisions: Vec::new(),
            estimates: Vec::new(),
        })
    }

    fn phi(&mut self, subset: &[String], context: &[String]) -> Result<PhiEstimate> {
        let runs = match self.tol {
            ToleranceConfig::Exact { .. } => self.runs,
            ToleranceConfig::Statistical => self.runs.max(2),
        };
        let est = phi_measure(self.table, subset, context, self.estimator, runs, self.seed)
            .map_err(|e| TercError::Estimator {
                context: format!("phi({})", subset.join(",")),
                message: e.to_string(),
            })?;
        self.estimates.push(est.clone());
        Ok(est)
    }

    fn positive(&mut self, phi: &PhiEstimate, context: &[String]) -> Result<bool> {
        match self.tol {
            ToleranceConfig::Exact { epsilon } => Ok(phi.mean > epsilon),
            ToleranceConfig::Statistical => {
                let mut key = context.to_vec();
                key.sort();
                if !self.context_nulls.contains_key(&key) {
                    let projected = self.table.project(context)?;
                    let null =
                        null_bound(&projected, self.estimator, self.runs.max(2), self.seed)?;
                    self.context_nulls.insert(key.clone(), null);
                }
                is_significant(phi, &self.context_nulls[&key])
            }
        }
    }

    fn equal(&self, a: &PhiEstimate, b: &PhiEstimate) -> bool {
        match self.tol {
            ToleranceConfig::Exact { epsilon } => (a.mean - b.mean).abs() <= epsilon,
            // 95% intervals overlap
            ToleranceConfig::Statistical => a.lower <= b.upper && b.lower <= a.upper,
        }
    }

    fn record(&mut self, target: &[String], phi_mean: f64, action: &str) {
        self.decisions.push(Decision {
            step: self.decisions.len(),
            target: target.to_vec(),
            phi_mean,
            action: action.to_string(),
        });
    }

    fn finish(self, selected: Vec<String>, algorithm: AlgorithmTag) -> SelectionResult {
        SelectionResult {
            selected,
            estimates: self.estimates,
            null_model: self.null,
            algorithm,
            decisions: self.decisions,
        }
    }
}

/// Simultaneous test of every variable against the full set: keeps
/// `{X_i : phi(X_i; X -> A) > 0}`. Misses redundant groups by design.
pub fn naive_subset(
    table: &SampleTable,
    tol: ToleranceConfig,
    estimator: &Estimator,
    seed: u64,
) -> Result<SelectionResult> {
    let mut session = Session::new(table, tol, estimator, seed)?;
    let vars = table.variable_names();
    let mut selected = Vec::new();
    for v in &vars {
        let target = vec![v.clone()];
        let phi = session.phi(&target, &vars)?;
        if session.positive(&phi, &vars)? {
            session.record(&target, phi.mean, "kept");
            selected.push(v.clone());
        } else {
            session.record(&target, phi.mean, "excluded");
        }
    }
    Ok(session.finish(selected, AlgorithmTag::Naive))
}

fn subsets_ordered(vars: &[String]) -> Vec<Vec<String>> {
    // non-empty subsets, ascending cardinality then lexicographic index order
    let n = vars.len();
    let mut all: Vec<Vec<usize>> = (1u64..(1 << n))
        .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
        .collect();
    all.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    all.iter()
        .map(|idx| idx.iter().map(|&i| vars[i].clone()).collect())
        .collect()
}

fn union_sorted(a: &[String], b: &[String]) -> Vec<String> {
    let mut out = a.to_vec();
    for v in b {
        if !out.contains(v) {
            out.push(v.clone());
        }
    }
    out
}

/// Full redundancy-robust selection: the naive pass, then for each excluded
/// subset that still carries information, collect every equal-information
/// alternative and union in the smallest one. Exponential in the number of
/// excluded variables, hence the power-set guard.
pub fn select_full(
    table: &SampleTable,
    tol: ToleranceConfig,
    estimator: &Estimator,
    seed: u64,
) -> Result<SelectionResult> {
    let vars = table.variable_names();
    let naive = naive_subset(table, tol, estimator, seed)?;
    let mut session = Session::new(table, tol, estimator, seed)?;
    session.decisions = naive.decisions;
    session.estimates = naive.estimates;
    let mut selected = naive.selected;

    if vars.len() - selected.len() > POWER_SET_GUARD {
        return Err(TercError::PowerSetGuard {
            excluded: vars.len() - selected.len(),
            limit: POWER_SET_GUARD,
        });
    }

    loop {
        let excluded: Vec<String> = vars.iter().filter(|v| !selected.contains(v)).cloned().collect();
        if excluded.is_empty() {
            break;
        }
        let candidates = subsets_ordered(&excluded);
        let mut chosen: Option<Vec<String>> = None;
        for (k, p_k) in candidates.iter().enumerate() {
            let ctx_k = union_sorted(&selected, p_k);
            let phi_k = session.phi(p_k, &ctx_k)?;
            if !session.positive(&phi_k, &ctx_k)? {
                continue;
            }
            session.record(p_k, phi_k.mean, "informative excluded subset");
            // equal-information family
            let mut family: Vec<(Vec<String>, usize)> = vec![(p_k.clone(), p_k.len())];
            for p_l in candidates.iter().skip(k + 1) {
                let ctx_l = union_sorted(&selected, p_l);
                let phi_l = session.phi(p_l, &ctx_l)?;
                let joint = union_sorted(p_k, p_l);
                let ctx_kl = union_sorted(&selected, &joint);
                let phi_kl = session.phi(&joint, &ctx_kl)?;
                if session.equal(&phi_k, &phi_l) && session.equal(&phi_l, &phi_kl) {
                    session.record(p_l, phi_l.mean, "equal-information alternative");
                    family.push((p_l.clone(), p_l.len()));
                }
            }
            // smallest cardinality, then lexicographically smallest
            family.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
            chosen = Some(family[0].0.clone());
            break;
        }
        match chosen {
            Some(subset) => {
                session.record(&subset, f64::NAN, "unioned into selection");
                selected = union_sorted(&selected, &subset);
            }
            None => break,
        }
    }
    selected.sort();
    Ok(session.finish(selected, AlgorithmTag::Alg1))
}

/// Linear-time variant: iterate variables in ascending index order, dropping
/// each one whose measure against the current surviving set is zero. Valid
/// when redundant subsets share a cardinality.
pub fn select_fast(
    table: &SampleTable,
    tol: ToleranceConfig,
    estimator: &Estimator,
    seed: u64,
) -> Result<SelectionResult> {
    let mut session = Session::new(table, tol, estimator, seed)?;
    let mut current = table.variable_names();
    let mut selected = Vec::new();
    let order = current.clone();
    for v in &order {
        let target = vec![v.clone()];
        let phi = session.phi(&target, &current)?;
        if session.positive(&phi, &current)? {
            session.record(&target, phi.mean, "kept");
            selected.push(v.clone());
        } else {
            session.record(&target, phi.mean, "removed");
            current.retain(|x| x != v);
        }
    }
    Ok(session.finish(selected, AlgorithmTag::Alg2))
}
