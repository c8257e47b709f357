//! Environments and dataset generators: synthetic redundancy datasets, the
//! Secret Key Game, iterated prisoner's dilemma against Tit-For-N-Tats, a
//! cart-pole clone doped with random state variables, a minimal pendulum,
//! and a 1-D point-mass toy task.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TercError};
use crate::rl::{Action, ActionSpace, EnvHandle};
use crate::table::{Column, SampleTable};

// ---------------------------------------------------------------------------
// synthetic redundancy datasets

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// x4, x5, x6 are copies of x1.
    FourRedundant,
    /// x4, x5, x6 copy x1, x2, x3 respectively: two equivalent triplets.
    TwoTriplets,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, seed: u64) -> Self {
        SyntheticSpec { kind, n: 10_000, seed }
    }
}

/// Six binary variables plus the target `a`, which is 1 iff x1 = x2 = x3.
pub fn gen_synthetic(spec: SyntheticSpec) -> Result<SampleTable> {
    if spec.n == 0 {
        return Err(TercError::InvalidArgument("need at least 1 sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<i64> { (0..spec.n).map(|_| rng.gen_range(0..2)).collect() };
    let x1 = draw(&mut rng);
    let x2 = draw(&mut rng);
    let x3 = draw(&mut rng);
    let a: Vec<i64> = (0..spec.n)
        .map(|i| i64::from(x1[i] == x2[i] && x2[i] == x3[i]))
        .collect();
    let (x4, x5, x6) = match spec.kind {
        SyntheticKind::FourRedundant => (x1.clone(), x1.clone(), x1.clone()),
        SyntheticKind::TwoTriplets => (x1.clone(), x2.clone(), x3.clone()),
    };
    SampleTable::new(
        vec![
            "x1".into(),
            "x2".into(),
            "x3".into(),
            "x4".into(),
            "x5".into(),
            "x6".into(),
            "a".into(),
        ],
        vec![
            Column::Discrete(x1),
            Column::Discrete(x2),
            Column::Discrete(x3),
            Column::Discrete(x4),
            Column::Discrete(x5),
            Column::Discrete(x6),
            Column::Discrete(a),
        ],
        "a",
    )
}

// ---------------------------------------------------------------------------
// Secret Key Game

pub const SKG_KEY_MAX: i64 = 10;
pub const SKG_ACTION_LOW: i64 = -40;
pub const SKG_ACTION_HIGH: i64 = 40;

/// Y-intercept of the quadratic through (1, y1), (2, y2), (3, y3).
pub fn skg_secret(y1: i64, y2: i64, y3: i64) -> Result<i64> {
    for y in [y1, y2, y3] {
        if !(0..=SKG_KEY_MAX).contains(&y) {
            return Err(TercError::InvalidArgument(format!(
                "key value {y} outside [0..{SKG_KEY_MAX}]"
            )));
        }
    }
    Ok(3 * y1 - 3 * y2 + y3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretKeyConfig {
    pub n_keys: usize,
    pub secret_indices: [usize; 3],
    pub seed: u64,
}

impl SecretKeyConfig {
    /// Draws the three secret key positions once from the seed; they stay
    /// fixed for the life of the game.
    pub fn new(n_keys: usize, seed: u64) -> Result<Self> {
        if n_keys < 3 {
            return Err(TercError::Config("need at least 3 keys".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x736b_67);
        let mut idx = Vec::new();
        while idx.len() < 3 {
            let i = rng.gen_range(0..n_keys);
            if !idx.contains(&i) {
                idx.push(i);
            }
        }
        Ok(SecretKeyConfig {
            n_keys,
            secret_indices: [idx[0], idx[1], idx[2]],
            seed,
        })
    }

    fn validate(&self) -> Result<()> {
        let [a, b, c] = self.secret_indices;
        if a == b || b == c || a == c || self.secret_indices.iter().any(|&i| i >= self.n_keys) {
            return Err(TercError::Config("secret indices must be 3 distinct positions".into()));
        }
        Ok(())
    }
}

/// One-step episodes: reset draws fresh uniform keys, the reward is the
/// negative absolute distance between the action and the secret.
pub struct SecretKeyEnv {
    cfg: SecretKeyConfig,
    rng: ChaCha8Rng,
    keys: Vec<i64>,
    secret: i64,
    done: bool,
}

impl SecretKeyEnv {
    pub fn new(cfg: SecretKeyConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(SecretKeyEnv {
            cfg,
            rng,
            keys: Vec::new(),
            secret: 0,
            done: true,
        })
    }

    pub fn secret(&self) -> i64 {
        self.secret
    }

    /// Maps a discrete action index to the answered integer.
    pub fn action_to_answer(index: usize) -> i64 {
        SKG_ACTION_LOW + index as i64
    }

    pub fn n_actions() -> usize {
        (SKG_ACTION_HIGH - SKG_ACTION_LOW + 1) as usize
    }
}

impl EnvHandle for SecretKeyEnv {
    fn reset(&mut self) -> Vec<f64> {
        self.keys = (0..self.cfg.n_keys)
            .map(|_| self.rng.gen_range(0..=SKG_KEY_MAX))
            .collect();
        let [i, j, k] = self.cfg.secret_indices;
        self.secret = skg_secret(self.keys[i], self.keys[j], self.keys[k]).unwrap();
        self.done = false;
        self.keys.iter().map(|&v| v as f64).collect()
    }

    fn step(&mut self, action: &Action) -> Result<(Vec<f64>, f64, bool)> {
        if self.done {
            return Err(TercError::InvalidArgument("step after done; call reset".into()));
        }
        let answer = match *action {
            Action::Discrete(a) if a < Self::n_actions() => Self::action_to_answer(a),
            _ => {
                return Err(TercError::InvalidArgument(format!(
                    "action {action:?} outside the discrete range"
                )))
            }
        };
        self.done = true;
        let reward = -(answer - self.secret).abs() as f64;
        let state = self.keys.iter().map(|&v| v as f64).collect();
        Ok((state, reward, true))
    }

    fn state_dim(&self) -> usize {
        self.cfg.n_keys
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(Self::n_actions())
    }

    fn variable_names(&self) -> Vec<String> {
        (0..self.cfg.n_keys).map(|i| format!("k{i}")).collect()
    }

    fn config_string(&self) -> String {
        serde_json::to_string(&self.cfg).unwrap_or_default()
    }
}

// ---------------------------------------------------------------------------
// iterated prisoner's dilemma vs Tit-For-N-Tats

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    C,
    D,
}

/// Agent payoff, opponent payoff.
pub type Payoff = [[(f64, f64); 2]; 2];

pub const DEFAULT_PAYOFF: Payoff = [
    [(2.0, 2.0), (0.0, 3.0)], // agent C vs (C, D)
    [(3.0, 0.0), (1.0, 1.0)], // agent D vs (C, D)
];

/// Pair code for one round: (agent, opponent) with
/// (C,C) -> 0, (D,C) -> 1, (C,D) -> 2, (D,D) -> 3.
pub fn pair_code(agent: Move, opponent: Move) -> i64 {
    (agent == Move::D) as i64 + 2 * (opponent == Move::D) as i64
}

/// Tit-For-N-Tats: defects iff the agent's last `n` moves were all
/// defections; cooperates otherwise (including at the start).
pub fn tfnt_policy(agent_history: &[Move], n: usize) -> Move {
    if agent_history.len() >= n && agent_history[agent_history.len() - n..].iter().all(|&m| m == Move::D)
    {
        Move::D
    } else {
        Move::C
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpdConfig {
    /// Opponent retaliation threshold.
    pub opponent_n: usize,
    /// Number of past round codes exposed as the state.
    pub history_len: usize,
    pub payoff: Payoff,
    pub rounds: usize,
    pub seed: u64,
}

impl IpdConfig {
    pub fn new(opponent_n: usize, history_len: usize, rounds: usize, seed: u64) -> Result<Self> {
        let cfg = IpdConfig {
            opponent_n,
            history_len,
            payoff: DEFAULT_PAYOFF,
            rounds,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.opponent_n == 0 || self.history_len == 0 || self.rounds == 0 {
            return Err(TercError::Config("ipd sizes must be at least 1".into()));
        }
        if self.payoff.iter().flatten().any(|&(a, o)| a < 0.0 || o < 0.0) {
            return Err(TercError::Config("payoff entries must be non-negative".into()));
        }
        Ok(())
    }
}

pub struct IpdEnv {
    cfg: IpdConfig,
    state: Vec<i64>,
    agent_moves: Vec<Move>,
    round: usize,
}

impl IpdEnv {
    pub fn new(cfg: IpdConfig) -> Result<Self> {
        cfg.validate()?;
        let l = cfg.history_len;
        Ok(IpdEnv {
            cfg,
            state: vec![0; l],
            agent_moves: Vec::new(),
            round: 0,
        })
    }

    fn state_f64(&self) -> Vec<f64> {
        self.state.iter().map(|&c| c as f64).collect()
    }
}

impl EnvHandle for IpdEnv {
    fn reset(&mut self) -> Vec<f64> {
        // neutral start: history of mutual cooperation
        self.state = vec![0; self.cfg.history_len];
        self.agent_moves.clear();
        self.round = 0;
        self.state_f64()
    }

    fn step(&mut self, action: &Action) -> Result<(Vec<f64>, f64, bool)> {
        let agent = match *action {
            Action::Discrete(0) => Move::C,
            Action::Discrete(1) => Move::D,
            _ => {
                return Err(TercError::InvalidArgument(format!(
                    "ipd action must be 0 (cooperate) or 1 (defect), got {action:?}"
                )))
            }
        };
        let opponent = tfnt_policy(&self.agent_moves, self.cfg.opponent_n);
        let (r_agent, _r_opp) =
            self.cfg.payoff[(agent == Move::D) as usize][(opponent == Move::D) as usize];
        self.agent_moves.push(agent);
        self.state.remove(0);
        self.state.push(pair_code(agent, opponent));
        self.round += 1;
        Ok((self.state_f64(), r_agent, self.round >= self.cfg.rounds))
    }

    fn state_dim(&self) -> usize {
        self.cfg.history_len
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }

    fn variable_names(&self) -> Vec<String> {
        (0..self.cfg.history_len).map(|i| format!("h{i}")).collect()
    }

    fn config_string(&self) -> String {
        serde_json::to_string(&self.cfg).unwrap_or_default()
    }
}

// ---------------------------------------------------------------------------
// cart-pole clone doped with random variables

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleConfig {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_half_length: f64,
    pub force: f64,
    pub tau: f64,
    pub angle_limit: f64,
    pub track_limit: f64,
    pub max_steps: usize,
    pub doped: usize,
    pub doped_low: f64,
    pub doped_high: f64,
    pub seed: u64,
}

impl Default for CartPoleConfig {
    fn default() -> Self {
        CartPoleConfig {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force: 10.0,
            tau: 0.02,
            angle_limit: 12.0_f64.to_radians(),
            track_limit: 2.4,
            max_steps: 500,
            doped: 3,
            doped_low: -5.0,
            doped_high: 5.0,
            seed: 0,
        }
    }
}

pub struct CartPoleEnv {
    cfg: CartPoleConfig,
    rng: ChaCha8Rng,
    // x, x_dot, theta, theta_dot
    phys: [f64; 4],
    steps: usize,
    done: bool,
}

impl CartPoleEnv {
    pub fn new(cfg: CartPoleConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        CartPoleEnv {
            cfg,
            rng,
            phys: [0.0; 4],
            steps: 0,
            done: true,
        }
    }

    fn observe(&mut self) -> Vec<f64> {
        let mut s: Vec<f64> = self.phys.to_vec();
        for _ in 0..self.cfg.doped {
            s.push(self.rng.gen_range(self.cfg.doped_low..self.cfg.doped_high));
        }
        s
    }

    fn integrate(&mut self, force: f64) {
        let c = &self.cfg;
        let [_, x_dot, theta, theta_dot] = self.phys;
        let total_mass = c.cart_mass + c.pole_mass;
        let pm_l = c.pole_mass * c.pole_half_length;
        let (sin_t, cos_t) = theta.sin_cos();
        let temp = (force + pm_l * theta_dot * theta_dot * sin_t) / total_mass;
        let theta_acc = (c.gravity * sin_t - cos_t * temp)
            / (c.pole_half_length * (4.0 / 3.0 - c.pole_mass * cos_t * cos_t / total_mass));
        let x_acc = temp - pm_l * theta_acc * cos_t / total_mass;
        self.phys[0] += c.tau * x_dot;
        self.phys[1] += c.tau * x_acc;
        self.phys[2] += c.tau * theta_dot;
        self.phys[3] += c.tau * theta_acc;
    }
}

impl EnvHandle for CartPoleEnv {
    fn reset(&mut self) -> Vec<f64> {
        for v in &mut self.phys {
            *v = 0.0;
        }
        let init: Vec<f64> = (0..4).map(|_| self.rng.gen_range(-0.05..0.05)).collect();
        self.phys.copy_from_slice(&init);
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<(Vec<f64>, f64, bool)> {
        if self.done {
            return Err(TercError::InvalidArgument("step after done; call reset".into()));
        }
        let force = match *action {
            Action::Discrete(0) => -self.cfg.force,
            Action::Discrete(1) => self.cfg.force,
            _ => {
                return Err(TercError::InvalidArgument(format!(
                    "cartpole action must be 0 or 1, got {action:?}"
                )))
            }
        };
        self.integrate(force);
        self.steps += 1;
        let out_of_bounds = self.phys[0].abs() > self.cfg.track_limit
            || self.phys[2].abs() > self.cfg.angle_limit;
        self.done = out_of_bounds || self.steps >= self.cfg.max_steps;
        Ok((self.observe(), 1.0, self.done))
    }

    fn state_dim(&self) -> usize {
        4 + self.cfg.doped
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }

    fn variable_names(&self) -> Vec<String> {
        let mut names = vec![
            "x".to_string(),
            "x_dot".to_string(),
            "theta".to_string(),
            "theta_dot".to_string(),
        ];
        for i in 0..self.cfg.doped {
            names.push(format!("d{}", i + 1));
        }
        names
    }

    fn config_string(&self) -> String {
        serde_json::to_string(&self.cfg).unwrap_or_default()
    }
}

// ---------------------------------------------------------------------------
// minimal pendulum

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumConfig {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub tau: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        PendulumConfig {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            tau: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            max_steps: 200,
            seed: 0,
        }
    }
}

/// Swing-up task with torque control; state is (cos theta, sin theta,
/// theta_dot), reward penalizes angle, speed, and effort.
pub struct PendulumEnv {
    cfg: PendulumConfig,
    rng: ChaCha8Rng,
    theta: f64,
    theta_dot: f64,
    steps: usize,
    done: bool,
}

impl PendulumEnv {
    pub fn new(cfg: PendulumConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        PendulumEnv {
            cfg,
            rng,
            theta: 0.0,
            theta_dot: 0.0,
            steps: 0,
            done: true,
        }
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

fn angle_normalize(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    ((theta + std::f64::consts::PI).rem_euclid(two_pi)) - std::f64::consts::PI
}

impl EnvHandle for PendulumEnv {
    fn reset(&mut self) -> Vec<f64> {
        self.theta = self.rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        self.theta_dot = self.rng.gen_range(-1.0..1.0);
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<(Vec<f64>, f64, bool)> {
        if self.done {
            return Err(TercError::InvalidArgument("step after done; call reset".into()));
        }
        let torque = match *action {
            Action::Continuous(u) => u.clamp(-self.cfg.max_torque, self.cfg.max_torque),
            Action::Discrete(_) => {
                return Err(TercError::InvalidArgument("pendulum takes continuous torque".into()))
            }
        };
        let c = &self.cfg;
        let th = angle_normalize(self.theta);
        let cost = th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * torque * torque;
        self.theta_dot += c.tau
            * (3.0 * c.gravity / (2.0 * c.length) * th.sin()
                + 3.0 * torque / (c.mass * c.length * c.length));
        self.theta_dot = self.theta_dot.clamp(-c.max_speed, c.max_speed);
        self.theta += c.tau * self.theta_dot;
        self.steps += 1;
        self.done = self.steps >= c.max_steps;
        Ok((self.observe(), -cost, self.done))
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous {
            low: -self.cfg.max_torque,
            high: self.cfg.max_torque,
        }
    }

    fn variable_names(&self) -> Vec<String> {
        vec!["cos_theta".into(), "sin_theta".into(), "theta_dot".into()]
    }

    fn config_string(&self) -> String {
        serde_json::to_string(&self.cfg).unwrap_or_default()
    }
}

// ---------------------------------------------------------------------------
// 1-D point mass "reach the origin" toy task

pub struct PointMassEnv {
    rng: ChaCha8Rng,
    seed: u64,
    pos: f64,
    steps: usize,
    done: bool,
}

impl PointMassEnv {
    pub const MAX_STEPS: usize = 20;

    pub fn new(seed: u64) -> Self {
        PointMassEnv {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            pos: 0.0,
            steps: 0,
            done: true,
        }
    }
}

impl EnvHandle for PointMassEnv {
    fn reset(&mut self) -> Vec<f64> {
        self.pos = self.rng.gen_range(-1.0..1.0);
        self.steps = 0;
        self.done = false;
        vec![self.pos]
    }

    fn step(&mut self, action: &Action) -> Result<(Vec<f64>, f64, bool)> {
        if self.done {
            return Err(TercError::InvalidArgument("step after done; call reset".into()));
        }
        let a = match *action {
            Action::Continuous(v) => v.clamp(-1.0, 1.0),
            Action::Discrete(_) => {
                return Err(TercError::InvalidArgument("point mass takes a continuous push".into()))
            }
        };
        self.pos = (self.pos + 0.25 * a).clamp(-2.0, 2.0);
        self.steps += 1;
        self.done = self.steps >= Self::MAX_STEPS;
        Ok((vec![self.pos], -self.pos.abs(), self.done))
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous { low: -1.0, high: 1.0 }
    }

    fn variable_names(&self) -> Vec<String> {
        vec!["pos".into()]
    }

    fn config_string(&self) -> String {
        format!("{{\"env\":\"point_mass\",\"seed\":{}}}", self.seed)
    }
}
