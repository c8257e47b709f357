//! Desk-scale reinforcement learning: tabular Q-learning, one-step TD
//! actor-critic, and PPO with a clipped surrogate, all recording full
//! trajectories for downstream analysis.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, TercError};
use crate::neural::{
    mlp_forward, mlp_grad, mlp_init, opt_step, Layout, Loss, MlpParams, OptimState,
};
use crate::traj::{ActionValue, TrajRow, TrajectoryBatch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

impl Action {
    pub fn value(&self) -> ActionValue {
        match *self {
            Action::Discrete(a) => ActionValue::Discrete(a as i64),
            Action::Continuous(a) => ActionValue::Continuous(a),
        }
    }
}

/// Minimal episodic environment interface. `step` after `done` requires a
/// `reset`; the state vector length is constant.
pub trait EnvHandle {
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<(Vec<f64>, f64, bool)>;
    fn state_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn variable_names(&self) -> Vec<String>;
    fn config_string(&self) -> String;
}

fn discrete_action_count(env: &dyn EnvHandle) -> Result<usize> {
    match env.action_space() {
        ActionSpace::Discrete(n) if n > 0 => Ok(n),
        ActionSpace::Discrete(_) => Err(TercError::InvalidArgument("empty action space".into())),
        ActionSpace::Continuous { .. } => Err(TercError::InvalidArgument(
            "continuous action space requires ppo".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Steps over which epsilon decays linearly from 1 to 0 (then stays 0).
    pub eps_decay_steps: usize,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            alpha: 0.9,
            gamma: 0.99,
            eps_decay_steps: 40_000,
        }
    }
}

/// Tabular action values keyed by the rounded discrete state; unseen states
/// read as all-zero.
#[derive(Debug, Clone)]
pub struct QTable {
    pub table: HashMap<Vec<i64>, Vec<f64>>,
    pub n_actions: usize,
    pub config: QConfig,
}

pub fn encode_state(state: &[f64]) -> Vec<i64> {
    state.iter().map(|&v| v.round() as i64).collect()
}

impl QTable {
    pub fn new(n_actions: usize, config: QConfig) -> Self {
        QTable {
            table: HashMap::new(),
            n_actions,
            config,
        }
    }

    pub fn values(&self, state: &[f64]) -> Vec<f64> {
        self.table
            .get(&encode_state(state))
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_actions])
    }

    pub fn greedy(&self, state: &[f64]) -> usize {
        let v = self.values(state);
        let mut best = 0;
        for (i, &q) in v.iter().enumerate() {
            if q > v[best] {
                best = i;
            }
        }
        best
    }

    fn update(&mut self, state: &[f64], action: usize, reward: f64, next: &[f64], done: bool) {
        let target = if done {
            reward
        } else {
            let nv = self.values(next);
            reward + self.config.gamma * nv.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        let entry = self
            .table
            .entry(encode_state(state))
            .or_insert_with(|| vec![0.0; self.n_actions]);
        entry[action] += self.config.alpha * (target - entry[action]);
    }
}

/// Tabular Q-learning with epsilon-greedy exploration; epsilon decays
/// linearly per environment step.
pub fn train_q(
    env: &mut dyn EnvHandle,
    episodes: usize,
    cfg: QConfig,
    seed: u64,
) -> Result<(QTable, TrajectoryBatch)> {
    let n_actions = discrete_action_count(env)?;
    let mut q = QTable::new(n_actions, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut global_step = 0usize;
    for ep in 0..episodes {
        let mut state = env.reset();
        let mut done = false;
        let mut t = 0usize;
        while !done {
            let eps = 1.0 - (global_step as f64 / cfg.eps_decay_steps as f64);
            let eps = eps.max(0.0);
            let action = if rng.gen::<f64>() < eps {
                rng.gen_range(0..n_actions)
            } else {
                q.greedy(&state)
            };
            let (next, reward, d) = env.step(&Action::Discrete(action))?;
            q.update(&state, action, reward, &next, d);
            rows.push(TrajRow {
                ep,
                t,
                s: state,
                a: ActionValue::Discrete(action as i64),
                r: reward,
            });
            state = next;
            done = d;
            t += 1;
            global_step += 1;
        }
    }
    let batch = TrajectoryBatch::new(rows, env.variable_names(), env.config_string(), seed)?;
    Ok((q, batch))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcConfig {
    pub hidden: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Scale the actor step by gamma^t as in the episodic policy-gradient
    /// formula; switchable off.
    pub discount_actor: bool,
}

impl Default for AcConfig {
    fn default() -> Self {
        AcConfig {
            hidden: 64,
            gamma: 0.99,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            discount_actor: true,
        }
    }
}

fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One-step TD actor-critic: softmax policy, value critic, per-step updates
/// with delta = r + gamma v(s') - v(s) and terminal bootstrap v := 0.
pub fn train_actor_critic(
    env: &mut dyn EnvHandle,
    episodes: usize,
    cfg: AcConfig,
    seed: u64,
) -> Result<((MlpParams<f64>, MlpParams<f64>), TrajectoryBatch)> {
    let n_actions = discrete_action_count(env)?;
    let d = env.state_dim();
    let mut actor = mlp_init::<f64>(
        &Layout::with_head(vec![d, cfg.hidden, n_actions], crate::neural::Activation::Softmax)?,
        seed,
    )?;
    let mut critic = mlp_init::<f64>(
        &Layout::with_head(vec![d, cfg.hidden, 1], crate::neural::Activation::Linear)?,
        seed.wrapping_add(1),
    )?;
    let mut actor_opt = OptimState::sgd(cfg.actor_lr);
    let mut critic_opt = OptimState::sgd(cfg.critic_lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut rows = Vec::new();
    for ep in 0..episodes {
        let mut state = env.reset();
        let mut done = false;
        let mut t = 0usize;
        let mut gamma_t = 1.0;
        while !done {
            let probs = mlp_forward(&actor, &state)?;
            let action = sample_categorical(&mut rng, &probs);
            let (next, reward, d_flag) = env.step(&Action::Discrete(action))?;
            let v_s = mlp_forward(&critic, &state)?[0];
            let v_next = if d_flag { 0.0 } else { mlp_forward(&critic, &next)?[0] };
            let target = reward + cfg.gamma * v_next;
            let delta = target - v_s;

            let (cg, _) = mlp_grad(&critic, &[state.clone()], &[vec![target]], Loss::Mse)?;
            opt_step(&mut critic, &cg, &mut critic_opt)?;

            let weight = if cfg.discount_actor { gamma_t * delta } else { delta };
            let (ag, _) = mlp_grad(
                &actor,
                &[state.clone()],
                &[vec![action as f64, weight]],
                Loss::PgWeightedLogProb { entropy_coef: 0.0 },
            )?;
            opt_step(&mut actor, &ag, &mut actor_opt)?;
            if !actor.is_finite() || !critic.is_finite() {
                return Err(TercError::Diverged { iteration: ep });
            }

            rows.push(TrajRow {
                ep,
                t,
                s: state,
                a: ActionValue::Discrete(action as i64),
                r: reward,
            });
            state = next;
            done = d_flag;
            t += 1;
            gamma_t *= cfg.gamma;
        }
    }
    let batch = TrajectoryBatch::new(rows, env.variable_names(), env.config_string(), seed)?;
    Ok(((actor, critic), batch))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub hidden: usize,
    pub gamma: f64,
    pub lr: f64,
    pub clip: f64,
    pub minibatch: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub entropy_coef: f64,
    /// When set, the surrogate (old) policy is refreshed as a Polyak blend
    /// `old := f * new + (1 - f) * old` after each update window instead of a
    /// straight copy.
    pub surrogate_blend: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            hidden: 64,
            gamma: 0.99,
            lr: 3e-4,
            clip: 0.2,
            minibatch: 64,
            horizon: 2048,
            epochs: 10,
            entropy_coef: 0.001,
            surrogate_blend: Some(0.95),
        }
    }
}

impl PpoConfig {
    fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.gamma <= 0.0 || self.minibatch == 0 || self.horizon == 0 {
            return Err(TercError::Config("ppo rates and sizes must be positive".into()));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(TercError::Config("ppo clip must lie in (0, 1)".into()));
        }
        if let Some(f) = self.surrogate_blend {
            if !(0.0..=1.0).contains(&f) {
                return Err(TercError::Config("surrogate blend must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Effective multiplier of the advantage in the clipped surrogate:
/// `min(ratio * A, clip(ratio) * A) = factor * A`.
pub fn ppo_factor(ratio: f64, advantage: f64, clip: f64) -> f64 {
    if advantage >= 0.0 {
        ratio.min(1.0 + clip)
    } else {
        ratio.max(1.0 - clip)
    }
}

// Weight of grad-ln-pi in the surrogate gradient; zero when the clip is
// active and the clipped branch is the minimum.
fn ppo_grad_weight(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let active = if advantage >= 0.0 {
        ratio <= 1.0 + clip
    } else {
        ratio >= 1.0 - clip
    };
    if active {
        ratio * advantage
    } else {
        0.0
    }
}

enum PolicyKind {
    Discrete(usize),
    Continuous { low: f64, high: f64 },
}

/// Log-probability of `action` under the current policy network.
pub fn ppo_log_prob(actor: &MlpParams<f64>, state: &[f64], action: &Action) -> Result<f64> {
    let out = mlp_forward(actor, state)?;
    match *action {
        Action::Discrete(a) => Ok(out[a].max(1e-300).ln()),
        Action::Continuous(a) => {
            let (mu, sigma) = (out[0], out[1].exp());
            let z = (a - mu) / sigma;
            Ok(-0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
        }
    }
}

/// PPO with the clipped surrogate objective over fixed-size step windows.
pub fn train_ppo(
    env: &mut dyn EnvHandle,
    total_steps: usize,
    cfg: PpoConfig,
    seed: u64,
) -> Result<((MlpParams<f64>, MlpParams<f64>), TrajectoryBatch)> {
    cfg.validate()?;
    let d = env.state_dim();
    let kind = match env.action_space() {
        ActionSpace::Discrete(n) => PolicyKind::Discrete(n),
        ActionSpace::Continuous { low, high } => PolicyKind::Continuous { low, high },
    };
    let actor_layout = match kind {
        PolicyKind::Discrete(n) => Layout::new(
            vec![d, cfg.hidden, n],
            vec![crate::neural::Activation::Tanh, crate::neural::Activation::Softmax],
        )?,
        PolicyKind::Continuous { .. } => Layout::new(
            vec![d, cfg.hidden, 2],
            vec![crate::neural::Activation::Tanh, crate::neural::Activation::Linear],
        )?,
    };
    let mut actor = mlp_init::<f64>(&actor_layout, seed)?;
    let mut critic = mlp_init::<f64>(
        &Layout::new(
            vec![d, cfg.hidden, 1],
            vec![crate::neural::Activation::Tanh, crate::neural::Activation::Linear],
        )?,
        seed.wrapping_add(1),
    )?;
    let mut old_actor = actor.clone();
    let mut actor_opt = OptimState::adam(cfg.lr, &actor);
    let mut critic_opt = OptimState::adam(cfg.lr, &critic);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));

    let mut rows = Vec::new();
    let mut ep = 0usize;
    let mut t = 0usize;
    let mut state = env.reset();
    let mut steps_done = 0usize;

    while steps_done < total_steps {
        // collect one window
        let mut w_states: Vec<Vec<f64>> = Vec::new();
        let mut w_actions: Vec<Action> = Vec::new();
        let mut w_rewards: Vec<f64> = Vec::new();
        let mut w_dones: Vec<bool> = Vec::new();
        let window = cfg.horizon.min(total_steps - steps_done);
        for _ in 0..window {
            let out = mlp_forward(&actor, &state)?;
            let action = match kind {
                PolicyKind::Discrete(_) => Action::Discrete(sample_categorical(&mut rng, &out)),
                PolicyKind::Continuous { low, high } => {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    Action::Continuous((out[0] + out[1].exp() * noise).clamp(low, high))
                }
            };
            let (next, reward, done) = env.step(&action)?;
            rows.push(TrajRow {
                ep,
                t,
                s: state.clone(),
                a: action.value(),
                r: reward,
            });
            w_states.push(state);
            w_actions.push(action);
            w_rewards.push(reward);
            w_dones.push(done);
            if done {
                ep += 1;
                t = 0;
                state = env.reset();
            } else {
                t += 1;
                state = next;
            }
            steps_done += 1;
        }

        // discounted returns-to-go, bootstrapped at the window cut
        let mut returns = vec![0.0; w_states.len()];
        let mut acc = if *w_dones.last().unwrap() {
            0.0
        } else {
            mlp_forward(&critic, &state)?[0]
        };
        for i in (0..w_states.len()).rev() {
            if w_dones[i] {
                acc = 0.0;
            }
            acc = w_rewards[i] + cfg.gamma * acc;
            returns[i] = acc;
        }
        let mut advantages: Vec<f64> = Vec::with_capacity(returns.len());
        for (s, &ret) in w_states.iter().zip(&returns) {
            advantages.push(ret - mlp_forward(&critic, s)?[0]);
        }
        let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>()
            / advantages.len() as f64;
        let scale = 1.0 / (var.sqrt() + 1e-8);
        for a in &mut advantages {
            *a = (*a - mean) * scale;
        }
        let old_log_probs: Vec<f64> = w_states
            .iter()
            .zip(&w_actions)
            .map(|(s, a)| ppo_log_prob(&old_actor, s, a))
            .collect::<Result<_>>()?;

        for _epoch in 0..cfg.epochs {
            let mut order: Vec<usize> = (0..w_states.len()).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            for batch in order.chunks(cfg.minibatch) {
                let mut inputs = Vec::with_capacity(batch.len());
                let mut pg_targets = Vec::with_capacity(batch.len());
                let mut v_targets = Vec::with_capacity(batch.len());
                for &i in batch {
                    let ratio =
                        (ppo_log_prob(&actor, &w_states[i], &w_actions[i])? - old_log_probs[i]).exp();
                    let w = ppo_grad_weight(ratio, advantages[i], cfg.clip);
                    let a = match w_actions[i] {
                        Action::Discrete(k) => k as f64,
                        Action::Continuous(v) => v,
                    };
                    inputs.push(w_states[i].clone());
                    pg_targets.push(vec![a, w]);
                    v_targets.push(vec![returns[i]]);
                }
                let pg_loss = match kind {
                    PolicyKind::Discrete(_) => Loss::PgWeightedLogProb {
                        entropy_coef: cfg.entropy_coef,
                    },
                    PolicyKind::Continuous { .. } => Loss::GaussianPg {
                        entropy_coef: cfg.entropy_coef,
                    },
                };
                let (ag, _) = mlp_grad(&actor, &inputs, &pg_targets, pg_loss)?;
                opt_step(&mut actor, &ag, &mut actor_opt)?;
                let (cg, _) = mlp_grad(&critic, &inputs, &v_targets, Loss::Mse)?;
                opt_step(&mut critic, &cg, &mut critic_opt)?;
            }
            if !actor.is_finite() || !critic.is_finite() {
                return Err(TercError::Diverged { iteration: steps_done });
            }
        }

        match cfg.surrogate_blend {
            Some(f) => {
                let mut flat = old_actor.flat();
                let new = actor.flat();
                for (o, n) in flat.iter_mut().zip(&new) {
                    *o = f * n + (1.0 - f) * *o;
                }
                old_actor.set_flat(&flat);
            }
            None => old_actor = actor.clone(),
        }
    }
    let batch = TrajectoryBatch::new(rows, env.variable_names(), env.config_string(), seed)?;
    Ok(((actor, critic), batch))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-armed bandit: action 0 pays 1, action 1 pays 0; one step.
    struct Bandit;

    impl EnvHandle for Bandit {
        fn reset(&mut self) -> Vec<f64> {
            vec![0.0]
        }
        fn step(&mut self, action: &Action) -> Result<(Vec<f64>, f64, bool)> {
            let r = match action {
                Action::Discrete(0) => 1.0,
                _ => 0.0,
            };
            Ok((vec![0.0], r, true))
        }
        fn state_dim(&self) -> usize {
            1
        }
        fn action_space(&self) -> ActionSpace {
            ActionSpace::Discrete(2)
        }
        fn variable_names(&self) -> Vec<String> {
            vec!["x0".into()]
        }
        fn config_string(&self) -> String {
            "bandit".into()
        }
    }

    /// Deterministic chain: s0 -(r=1)-> s1 -(r=0)-> done; single action.
    struct Chain {
        pos: usize,
    }

    impl EnvHandle for Chain {
        fn reset(&mut self) -> Vec<f64> {
            self.pos = 0;
            vec![1.0, 0.0]
        }
        fn step(&mut self, _action: &Action) -> Result<(Vec<f64>, f64, bool)> {
            if self.pos == 0 {
                self.pos = 1;
                Ok((vec![0.0, 1.0], 1.0, false))
            } else {
                Ok((vec![0.0, 0.0], 0.0, true))
            }
        }
        fn state_dim(&self) -> usize {
            2
        }
        fn action_space(&self) -> ActionSpace {
            ActionSpace::Discrete(1)
        }
        fn variable_names(&self) -> Vec<String> {
            vec!["s0".into(), "s1".into()]
        }
        fn config_string(&self) -> String {
            "chain".into()
        }
    }

    struct ContinuousBandit;

    impl EnvHandle for ContinuousBandit {
        fn reset(&mut self) -> Vec<f64> {
            vec![0.0]
        }
        fn step(&mut self, action: &Action) -> Result<(Vec<f64>, f64, bool)> {
            let a = match action {
                Action::Continuous(v) => *v,
                Action::Discrete(v) => *v as f64,
            };
            Ok((vec![0.0], -a.abs(), true))
        }
        fn state_dim(&self) -> usize {
            1
        }
        fn action_space(&self) -> ActionSpace {
            ActionSpace::Continuous { low: -1.0, high: 1.0 }
        }
        fn variable_names(&self) -> Vec<String> {
            vec!["x0".into()]
        }
        fn config_string(&self) -> String {
            "cbandit".into()
        }
    }

    #[test]
    fn q_learns_bandit() {
        let mut env = Bandit;
        let cfg = QConfig {
            eps_decay_steps: 500,
            ..QConfig::default()
        };
        let (q, batch) = train_q(&mut env, 1000, cfg, 0).unwrap();
        assert_eq!(q.greedy(&[0.0]), 0);
        let v = q.values(&[0.0]);
        assert!((v[0] - 1.0).abs() < 1e-9);
        assert_eq!(batch.n_episodes(), 1000);
        // last episodes are greedy (eps floor 0) and thus optimal
        assert_eq!(*batch.meta.episode_returns.last().unwrap(), 1.0);
    }

    #[test]
    fn q_rejects_continuous_actions() {
        let mut env = ContinuousBandit;
        assert!(train_q(&mut env, 1, QConfig::default(), 0).is_err());
    }

    #[test]
    fn q_seed_determinism() {
        let (q1, b1) = train_q(&mut Bandit, 200, QConfig::default(), 9).unwrap();
        let (q2, b2) = train_q(&mut Bandit, 200, QConfig::default(), 9).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(q1.values(&[0.0]), q2.values(&[0.0]));
        let (_, b3) = train_q(&mut Bandit, 200, QConfig::default(), 10).unwrap();
        assert_ne!(b1, b3);
    }

    #[test]
    fn unseen_state_reads_zero() {
        let q = QTable::new(3, QConfig::default());
        assert_eq!(q.values(&[5.0, -2.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn ac_critic_converges_on_chain() {
        let mut env = Chain { pos: 0 };
        let cfg = AcConfig {
            critic_lr: 0.02,
            ..AcConfig::default()
        };
        let ((_, critic), _) = train_actor_critic(&mut env, 4000, cfg, 1).unwrap();
        // analytic: v(s0) = 1 + 0.99 * v(s1), v(s1) = 0
        let v0 = mlp_forward(&critic, &[1.0, 0.0]).unwrap()[0];
        let v1 = mlp_forward(&critic, &[0.0, 1.0]).unwrap()[0];
        assert!((v0 - 1.0).abs() < 0.05, "v0 = {v0}");
        assert!(v1.abs() < 0.05, "v1 = {v1}");
    }

    #[test]
    fn ac_learns_bandit_policy() {
        let mut env = Bandit;
        let cfg = AcConfig {
            actor_lr: 0.05,
            critic_lr: 0.02,
            ..AcConfig::default()
        };
        let ((actor, _), _) = train_actor_critic(&mut env, 3000, cfg, 2).unwrap();
        let probs = mlp_forward(&actor, &[0.0]).unwrap();
        assert!(probs[0] > 0.9, "p(best) = {}", probs[0]);
    }

    #[test]
    fn ac_zero_learning_rates_freeze_parameters() {
        let cfg = AcConfig {
            actor_lr: 0.0,
            critic_lr: 0.0,
            ..AcConfig::default()
        };
        let ((actor, critic), _) = train_actor_critic(&mut Bandit, 50, cfg, 3).unwrap();
        let layout = Layout::with_head(vec![1, 64, 2], crate::neural::Activation::Softmax).unwrap();
        let fresh = mlp_init::<f64>(&layout, 3).unwrap();
        assert_eq!(actor.flat(), fresh.flat());
        let clayout = Layout::with_head(vec![1, 64, 1], crate::neural::Activation::Linear).unwrap();
        let cfresh = mlp_init::<f64>(&clayout, 4).unwrap();
        assert_eq!(critic.flat(), cfresh.flat());
    }

    #[test]
    fn ppo_clip_factor_arithmetic() {
        assert!((ppo_factor(1.5, 1.0, 0.2) - 1.2).abs() < 1e-12);
        assert!((ppo_factor(0.9, 1.0, 0.2) - 0.9).abs() < 1e-12);
        assert!((ppo_factor(0.5, -1.0, 0.2) - 0.8).abs() < 1e-12);
        assert!((ppo_factor(1.1, -1.0, 0.2) - 1.1).abs() < 1e-12);
        // clipped branch kills the gradient
        assert_eq!(ppo_grad_weight(1.5, 1.0, 0.2), 0.0);
        assert_eq!(ppo_grad_weight(0.5, -1.0, 0.2), 0.0);
        assert!((ppo_grad_weight(1.1, 2.0, 0.2) - 2.2).abs() < 1e-12);
    }

    #[test]
    fn ppo_ratio_is_one_before_updates() {
        // old policy == current policy at the start of every window
        let layout = Layout::new(
            vec![2, 8, 3],
            vec![crate::neural::Activation::Tanh, crate::neural::Activation::Softmax],
        )
        .unwrap();
        let actor = mlp_init::<f64>(&layout, 5).unwrap();
        let old = actor.clone();
        for k in 0..3 {
            let s = vec![0.3 * k as f64, -0.1];
            let a = Action::Discrete(k);
            let ratio = (ppo_log_prob(&actor, &s, &a).unwrap()
                - ppo_log_prob(&old, &s, &a).unwrap())
            .exp();
            assert!((ratio - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ppo_learns_continuous_bandit() {
        let mut env = ContinuousBandit;
        let cfg = PpoConfig {
            horizon: 256,
            epochs: 4,
            lr: 3e-3,
            surrogate_blend: None,
            ..PpoConfig::default()
        };
        let ((actor, _), batch) = train_ppo(&mut env, 16384, cfg, 6).unwrap();
        let mu = mlp_forward(&actor, &[0.0]).unwrap()[0];
        assert!(mu.abs() < 0.3, "mean action {mu}");
        // reward improved over the run
        let rets = &batch.meta.episode_returns;
        let head: f64 = rets[..200].iter().sum::<f64>() / 200.0;
        let tail: f64 = rets[rets.len() - 200..].iter().sum::<f64>() / 200.0;
        assert!(tail > head, "head {head} tail {tail}");
    }

    #[test]
    fn ppo_config_validation() {
        let mut cfg = PpoConfig::default();
        cfg.clip = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = PpoConfig::default();
        cfg.lr = 0.0;
        assert!(cfg.validate().is_err());
        assert!(PpoConfig::default().validate().is_ok());
    }
}
