//! Experiment orchestration: config parsing, agent training with trajectory
//! capture, phi analysis with the null model and optional quartile/baseline
//! breakdowns, and report rendering.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{permutation_importance, PiResult, Scoring};
use crate::envs::{
    CartPoleConfig, CartPoleEnv, IpdConfig, IpdEnv, PendulumConfig, PendulumEnv, PointMassEnv,
    SecretKeyConfig, SecretKeyEnv,
};
use crate::error::{Result, TercError};
use crate::estimators::{Estimator, MineConfig};
use crate::neural::save_checkpoint;
use crate::rl::{train_actor_critic, train_ppo, train_q, AcConfig, EnvHandle, PpoConfig, QConfig};
use crate::selection::{
    is_significant, naive_subset, null_bound, select_fast, select_full, SelectionResult,
    ToleranceConfig,
};
use crate::traj::TrajectoryBatch;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ANALYSIS: i32 = 3;

/// Flat sectioned key/value config: `[section]` headers, `key = value`
/// lines, `#` comments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                current = line[1..line.len() - 1].trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TercError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            if current.is_empty() {
                return Err(TercError::Config(format!(
                    "line {}: key outside any [section]",
                    lineno + 1
                )));
            }
            sections
                .get_mut(&current)
                .unwrap()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(RunConfig { sections })
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn get(&self, section: &str, key: &str) -> Result<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(String::as_str)
            .ok_or_else(|| TercError::Config(format!("missing field {section}.{key}")))
    }

    pub fn get_or<'a>(&'a self, section: &str, key: &str, default: &'a str) -> &'a str {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(String::as_str)
            .unwrap_or(default)
    }

    pub fn get_u64(&self, section: &str, key: &str) -> Result<u64> {
        self.get(section, key)?
            .parse()
            .map_err(|_| TercError::Config(format!("field {section}.{key} is not an integer")))
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<usize> {
        self.get(section, key)?
            .parse()
            .map_err(|_| TercError::Config(format!("field {section}.{key} is not an integer")))
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<f64> {
        self.get(section, key)?
            .parse()
            .map_err(|_| TercError::Config(format!("field {section}.{key} is not a number")))
    }

    /// Canonical serialization (sorted sections and keys); hashing this gives
    /// a stable provenance fingerprint.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (name, kv) in &self.sections {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in kv {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn hash(&self) -> u64 {
        fnv1a(self.canonical().as_bytes())
    }

    /// Config seed, overridable by the TERC_SEED environment variable.
    pub fn seed(&self, section: &str) -> Result<u64> {
        if let Ok(v) = std::env::var("TERC_SEED") {
            return v
                .parse()
                .map_err(|_| TercError::Config("TERC_SEED is not an integer".into()));
        }
        self.get_u64(section, "seed")
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn build_env(cfg: &RunConfig, seed: u64) -> Result<Box<dyn EnvHandle>> {
    match cfg.get("env", "kind")? {
        "skg" => {
            let n_keys = cfg.get_usize("env", "keys")?;
            Ok(Box::new(SecretKeyEnv::new(SecretKeyConfig::new(n_keys, seed)?)?))
        }
        "ipd" => {
            let n = cfg.get_usize("env", "opponent_n")?;
            let l = cfg.get_usize("env", "history_len")?;
            let rounds = cfg.get_usize("env", "rounds")?;
            Ok(Box::new(IpdEnv::new(IpdConfig::new(n, l, rounds, seed)?)?))
        }
        "cartpole" => {
            let mut c = CartPoleConfig::default();
            c.seed = seed;
            if let Ok(d) = cfg.get_usize("env", "doped") {
                c.doped = d;
            }
            Ok(Box::new(CartPoleEnv::new(c)))
        }
        "pendulum" => {
            let mut c = PendulumConfig::default();
            c.seed = seed;
            Ok(Box::new(PendulumEnv::new(c)))
        }
        "point_mass" => Ok(Box::new(PointMassEnv::new(seed))),
        other => Err(TercError::Config(format!("unknown env.kind {other:?}"))),
    }
}

/// Trains the configured agent and writes `traj.jsonl`, its metadata
/// sidecar, and a checkpoint into `out_dir`.
pub fn cmd_train(config_path: &Path, out_dir: &Path) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let seed = cfg.seed("agent")?;
    let env_seed = cfg.seed("env")?;
    let mut env = build_env(&cfg, env_seed)?;
    fs::create_dir_all(out_dir)?;
    let traj_path = out_dir.join("traj.jsonl");

    let batch = match cfg.get("agent", "kind")? {
        "q" => {
            let episodes = cfg.get_usize("agent", "episodes")?;
            let mut qcfg = QConfig::default();
            if let Ok(v) = cfg.get_f64("agent", "alpha") {
                qcfg.alpha = v;
            }
            if let Ok(v) = cfg.get_f64("agent", "gamma") {
                qcfg.gamma = v;
            }
            if let Ok(v) = cfg.get_usize("agent", "eps_decay_steps") {
                qcfg.eps_decay_steps = v;
            }
            let (q, batch) = train_q(env.as_mut(), episodes, qcfg, seed)?;
            let table: BTreeMap<String, Vec<f64>> = q
                .table
                .iter()
                .map(|(k, v)| {
                    let key = k.iter().map(i64::to_string).collect::<Vec<_>>().join(",");
                    (key, v.clone())
                })
                .collect();
            fs::write(
                out_dir.join("qtable.json"),
                serde_json::to_string_pretty(&table)?,
            )?;
            batch
        }
        "ac" => {
            let episodes = cfg.get_usize("agent", "episodes")?;
            let mut ac = AcConfig::default();
            if let Ok(v) = cfg.get_f64("agent", "actor_lr") {
                ac.actor_lr = v;
            }
            if let Ok(v) = cfg.get_f64("agent", "critic_lr") {
                ac.critic_lr = v;
            }
            let ((actor, critic), batch) = train_actor_critic(env.as_mut(), episodes, ac, seed)?;
            save_checkpoint(&actor, &out_dir.join("actor.json"))?;
            save_checkpoint(&critic, &out_dir.join("critic.json"))?;
            batch
        }
        "ppo" => {
            let steps = cfg.get_usize("agent", "steps")?;
            let mut pc = PpoConfig::default();
            if let Ok(v) = cfg.get_f64("agent", "lr") {
                pc.lr = v;
            }
            if let Ok(v) = cfg.get_usize("agent", "horizon") {
                pc.horizon = v;
            }
            let ((actor, critic), batch) = train_ppo(env.as_mut(), steps, pc, seed)?;
            save_checkpoint(&actor, &out_dir.join("actor.json"))?;
            save_checkpoint(&critic, &out_dir.join("critic.json"))?;
            batch
        }
        other => return Err(TercError::Config(format!("unknown agent.kind {other:?}"))),
    };
    let mut batch = batch;
    // echo the run's provenance into the sidecar
    batch.meta.env_config = format!(
        "{{\"config_hash\":{},\"env\":{}}}",
        cfg.hash(),
        batch.meta.env_config
    );
    batch.save_jsonl(&traj_path)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgChoice {
    Naive,
    Alg1,
    Alg2,
}

impl std::str::FromStr for AlgChoice {
    type Err = TercError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(AlgChoice::Naive),
            "alg1" => Ok(AlgChoice::Alg1),
            "alg2" => Ok(AlgChoice::Alg2),
            other => Err(TercError::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorChoice {
    Plugin,
    Mine,
}

impl std::str::FromStr for EstimatorChoice {
    type Err = TercError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plugin" => Ok(EstimatorChoice::Plugin),
            "mine" => Ok(EstimatorChoice::Mine),
            other => Err(TercError::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub name: String,
    pub phi_mean: f64,
    pub phi_std: f64,
    pub lower: f64,
    pub upper: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileRow {
    pub quartile: usize,
    pub variable: String,
    pub phi_mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: u64,
    pub seed: u64,
    pub estimator: String,
    pub algorithm: AlgChoice,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub action: String,
    pub variables: Vec<VariableReport>,
    pub null_bound: f64,
    pub selected: Vec<String>,
    pub selection: SelectionResult,
    pub quartiles: Option<Vec<QuartileRow>>,
    pub baseline: Option<PiResult>,
    pub failed: Vec<String>,
    pub provenance: Provenance,
}

pub struct AnalyzeOptions {
    pub algorithm: AlgChoice,
    pub estimator: EstimatorChoice,
    pub quartiles: bool,
    pub baseline_pi: bool,
    pub runs: usize,
    pub seed: Option<u64>,
    pub mine: MineConfig,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            algorithm: AlgChoice::Alg2,
            estimator: EstimatorChoice::Plugin,
            quartiles: false,
            baseline_pi: false,
            runs: 10,
            seed: None,
            mine: MineConfig {
                batch: 256,
                iters: 500,
                learning_rate: 5e-3,
                ..MineConfig::default()
            },
        }
    }
}

/// Computes per-variable phi with the null model, runs the chosen selection
/// algorithm, and optionally adds quartile and baseline breakdowns.
pub fn cmd_analyze(input: &Path, opts: &AnalyzeOptions) -> Result<Report> {
    let batch = TrajectoryBatch::load_jsonl(input)?;
    let table = batch.to_table()?;
    let seed = match (opts.seed, std::env::var("TERC_SEED")) {
        (_, Ok(v)) => v
            .parse()
            .map_err(|_| TercError::Config("TERC_SEED is not an integer".into()))?,
        (Some(s), _) => s,
        (None, _) => batch.meta.seed,
    };
    let estimator = match opts.estimator {
        EstimatorChoice::Plugin => Estimator::Plugin,
        EstimatorChoice::Mine => Estimator::Mine(MineConfig {
            seed,
            runs: opts.runs,
            ..opts.mine.clone()
        }),
    };
    let tol = match opts.estimator {
        EstimatorChoice::Plugin => ToleranceConfig::default(),
        EstimatorChoice::Mine => ToleranceConfig::Statistical,
    };

    let mut failed = Vec::new();
    let null = null_bound(&table, &estimator, opts.runs, seed)?;
    let vars = table.variable_names();
    let mut variables = Vec::new();
    for v in &vars {
        match crate::estimators::phi_measure(&table, &[v.clone()], &vars, &estimator, opts.runs, seed)
        {
            Ok(est) => {
                let significant = is_significant(&est, &null)?;
                variables.push(VariableReport {
                    name: v.clone(),
                    phi_mean: est.mean,
                    phi_std: est.std,
                    lower: est.lower,
                    upper: est.upper,
                    significant,
                });
            }
            Err(_) => failed.push(v.clone()),
        }
    }

    let selection = match opts.algorithm {
        AlgChoice::Naive => naive_subset(&table, tol, &estimator, seed)?,
        AlgChoice::Alg1 => select_full(&table, tol, &estimator, seed)?,
        AlgChoice::Alg2 => select_fast(&table, tol, &estimator, seed)?,
    };

    let quartiles = if opts.quartiles {
        let mut rows = Vec::new();
        for (qi, qt) in batch.split_quartiles()?.iter().enumerate() {
            let qnames = qt.variable_names();
            for v in &qnames {
                match crate::estimators::phi_measure(
                    qt,
                    &[v.clone()],
                    &qnames,
                    &estimator,
                    opts.runs,
                    seed,
                ) {
                    Ok(est) => rows.push(QuartileRow {
                        quartile: qi + 1,
                        variable: v.clone(),
                        phi_mean: est.mean,
                        lower: est.lower,
                        upper: est.upper,
                    }),
                    Err(_) => failed.push(format!("q{}:{}", qi + 1, v)),
                }
            }
        }
        Some(rows)
    } else {
        None
    };

    let baseline = if opts.baseline_pi {
        let scoring = if table.column(table.action_name())?.is_discrete() {
            Scoring::Accuracy
        } else {
            Scoring::NegMse
        };
        Some(permutation_importance(&table, scoring, 1e-6, 1000, 0.01, seed)?)
    } else {
        None
    };

    let mut cfg_for_hash = RunConfig::default();
    let report = Report {
        action: table.action_name().to_string(),
        variables,
        null_bound: null.upper,
        selected: selection.selected.clone(),
        selection,
        quartiles,
        baseline,
        failed,
        provenance: Provenance {
            config_hash: {
                cfg_for_hash.sections.insert(
                    "analysis".into(),
                    BTreeMap::from([
                        ("algorithm".into(), format!("{:?}", opts.algorithm)),
                        ("estimator".into(), format!("{:?}", opts.estimator)),
                        ("runs".into(), opts.runs.to_string()),
                        ("seed".into(), seed.to_string()),
                        ("traj".into(), batch.meta.env_config.clone()),
                    ]),
                );
                cfg_for_hash.hash()
            },
            seed,
            estimator: format!("{:?}", opts.estimator).to_lowercase(),
            algorithm: opts.algorithm,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    Ok(report)
}

pub fn write_report(report: &Report, out: &Path) -> Result<()> {
    fs::write(out, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<Report> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Dot,
    Plotdata,
}

impl std::str::FromStr for ReportFormat {
    type Err = TercError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "dot" => Ok(ReportFormat::Dot),
            "plotdata" => Ok(ReportFormat::Plotdata),
            other => Err(TercError::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// Renders a report in the requested format.
pub fn cmd_report(report: &Report, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)?),
        ReportFormat::Csv => {
            let mut out =
                String::from("variable,phi_mean,phi_std,lower,upper,null_bound,significant\n");
            for v in &report.variables {
                out.push_str(&format!(
                    "{},{:?},{:?},{:?},{:?},{:?},{}\n",
                    v.name, v.phi_mean, v.phi_std, v.lower, v.upper, report.null_bound,
                    v.significant
                ));
            }
            Ok(out)
        }
        ReportFormat::Dot => {
            let mut out = String::from("digraph terc {\n");
            for v in report.variables.iter().filter(|v| v.significant) {
                out.push_str(&format!("  \"{}\" -> \"{}\";\n", v.name, report.action));
            }
            out.push_str("}\n");
            Ok(out)
        }
        ReportFormat::Plotdata => {
            let rows = report.quartiles.as_ref().ok_or_else(|| {
                TercError::InvalidArgument(
                    "report has no quartile data; analyze with --quartiles".into(),
                )
            })?;
            let mut out = String::from("quartile,variable,phi_mean,lower,upper\n");
            for r in rows {
                out.push_str(&format!(
                    "{},{},{:?},{:?},{:?}\n",
                    r.quartile, r.variable, r.phi_mean, r.lower, r.upper
                ));
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    const IPD_CFG: &str = "\
[env]
kind = ipd
opponent_n = 3
history_len = 2
rounds = 50
seed = 1

[agent]
kind = q
episodes = 4
seed = 1
";

    #[test]
    fn config_parse_and_hash() {
        let cfg = RunConfig::parse(IPD_CFG).unwrap();
        assert_eq!(cfg.get("env", "kind").unwrap(), "ipd");
        assert_eq!(cfg.get_usize("env", "rounds").unwrap(), 50);
        assert!(cfg.get("env", "nope").is_err());
        assert!(matches!(
            cfg.get_u64("env", "kind"),
            Err(TercError::Config(_))
        ));
        // hash is stable and order-insensitive
        let shuffled = "[agent]\nseed = 1\nkind = q\nepisodes = 4\n\n[env]\nseed = 1\nrounds = 50\nhistory_len = 2\nkind = ipd\nopponent_n = 3\n";
        assert_eq!(cfg.hash(), RunConfig::parse(shuffled).unwrap().hash());
    }

    #[test]
    fn config_rejects_malformed_lines() {
        assert!(RunConfig::parse("[env]\nkindipd\n").is_err());
        assert!(RunConfig::parse("kind = ipd\n").is_err());
    }

    #[test]
    fn invalid_field_rejected_with_name() {
        let bad = IPD_CFG.replace("history_len = 2", "history_len = 0");
        let cfg = RunConfig::parse(&bad).unwrap();
        let err = match build_env(&cfg, 1) {
            Err(e) => e,
            Ok(_) => panic!("expected config error"),
        };
        assert!(err.to_string().contains("at least 1"), "{err}");
    }

    #[test]
    fn train_is_deterministic() {
        let dir = tempdir().unwrap();
        let cfg_path = dir.path().join("run.cfg");
        fs::write(&cfg_path, IPD_CFG).unwrap();
        let out1 = dir.path().join("a");
        let out2 = dir.path().join("b");
        cmd_train(&cfg_path, &out1).unwrap();
        cmd_train(&cfg_path, &out2).unwrap();
        let t1 = fs::read(out1.join("traj.jsonl")).unwrap();
        let t2 = fs::read(out2.join("traj.jsonl")).unwrap();
        assert!(!t1.is_empty());
        assert_eq!(t1, t2);
        // metadata echoes the config hash
        let cfg = RunConfig::load(&cfg_path).unwrap();
        let meta = fs::read_to_string(out1.join("traj.meta.json")).unwrap();
        assert!(meta.contains(&cfg.hash().to_string()));
    }

    #[test]
    fn analyze_and_report_round_trip() {
        let dir = tempdir().unwrap();
        let cfg_path = dir.path().join("run.cfg");
        fs::write(&cfg_path, IPD_CFG).unwrap();
        let out = dir.path().join("run");
        cmd_train(&cfg_path, &out).unwrap();

        let opts = AnalyzeOptions {
            quartiles: true,
            baseline_pi: true,
            ..AnalyzeOptions::default()
        };
        let report = cmd_analyze(&out.join("traj.jsonl"), &opts).unwrap();
        assert_eq!(report.variables.len(), 2);
        assert!(report.failed.is_empty());
        assert!(report.baseline.is_some());
        let q = report.quartiles.as_ref().unwrap();
        assert_eq!(q.len(), 2 * 4);

        let path = dir.path().join("report.json");
        write_report(&report, &path).unwrap();
        let loaded = load_report(&path).unwrap();
        assert_eq!(report, loaded);

        // json -> csv keeps every numeric field exactly ({:?} is round-trip)
        let csv = cmd_report(&report, ReportFormat::Csv).unwrap();
        for v in &report.variables {
            assert!(csv.contains(&format!("{:?}", v.phi_mean)));
        }
        // plotdata row count = variables x quartiles (+ header)
        let plot = cmd_report(&report, ReportFormat::Plotdata).unwrap();
        assert_eq!(plot.lines().count(), 1 + 8);
        // dot edge count equals significant count
        let dot = cmd_report(&report, ReportFormat::Dot).unwrap();
        let sig = report.variables.iter().filter(|v| v.significant).count();
        assert_eq!(dot.matches("->").count(), sig);
    }

    #[test]
    fn analyze_is_deterministic_bytes() {
        let dir = tempdir().unwrap();
        let cfg_path = dir.path().join("run.cfg");
        fs::write(&cfg_path, IPD_CFG).unwrap();
        let out = dir.path().join("run");
        cmd_train(&cfg_path, &out).unwrap();
        let opts = AnalyzeOptions::default();
        let r1 = cmd_analyze(&out.join("traj.jsonl"), &opts).unwrap();
        let r2 = cmd_analyze(&out.join("traj.jsonl"), &opts).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }

    #[test]
    fn report_format_parsing() {
        assert!("csv".parse::<ReportFormat>().is_ok());
        assert!("bogus".parse::<ReportFormat>().is_err());
        assert!("alg1".parse::<AlgChoice>().is_ok());
        assert!("mine".parse::<EstimatorChoice>().is_ok());
    }
}
