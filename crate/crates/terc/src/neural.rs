//! Minimal dense feed-forward network engine.
//!
//! Shared by the neural MI estimator and the Actor-Critic / PPO agents.
//! Supports exactly four losses (mse, negative log-likelihood, the
//! Donsker-Varadhan objective, and weighted log-probability for policy
//! gradients), reverse-mode gradients for each, and SGD/Adam updates.
//! Everything is plain `Vec` arithmetic, generic over the float type.

use std::fmt::Debug;
use std::path::Path;

use num_traits::{Float, NumAssignOps};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TercError};

/// Float type bound for all network arithmetic.
pub trait Real: Float + NumAssignOps + Debug + Send + Sync + 'static {
    fn of(v: f64) -> Self {
        Self::from(v).expect("f64 conversion")
    }
    fn as_f64(self) -> f64;
}

impl Real for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
    Softmax,
}

/// Layer sizes plus a per-layer activation tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl Layout {
    pub fn new(sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let layout = Layout { sizes, activations };
        layout.validate()?;
        Ok(layout)
    }

    /// relu hidden layers with a chosen head activation.
    pub fn with_head(sizes: Vec<usize>, head: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(TercError::InvalidLayout("need at least 2 layers".into()));
        }
        let mut activations = vec![Activation::Relu; sizes.len() - 2];
        activations.push(head);
        Layout::new(sizes, activations)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 {
            return Err(TercError::InvalidLayout(format!(
                "need at least 2 layers, got {}",
                self.sizes.len()
            )));
        }
        if self.activations.len() != self.sizes.len() - 1 {
            return Err(TercError::InvalidLayout(format!(
                "expected {} activations, got {}",
                self.sizes.len() - 1,
                self.activations.len()
            )));
        }
        if self.sizes.iter().any(|&s| s == 0) {
            return Err(TercError::InvalidLayout("zero-sized layer".into()));
        }
        for (i, act) in self.activations.iter().enumerate() {
            if *act == Activation::Softmax && i != self.activations.len() - 1 {
                return Err(TercError::InvalidLayout(
                    "softmax only permitted on the final layer".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }
}

/// Per-layer weight matrices (out x in, row-major) and bias vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<F: Real> {
    pub layout: Layout,
    pub weights: Vec<Vec<F>>,
    pub biases: Vec<Vec<F>>,
}

impl<F: Real> MlpParams<F> {
    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layout: self.layout.clone(),
            weights: self.weights.iter().map(|w| vec![F::zero(); w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![F::zero(); b.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Flat view in a fixed order (weights then bias, layer by layer).
    pub fn flat(&self) -> Vec<F> {
        let mut out = Vec::new();
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[F]) {
        let mut idx = 0;
        for l in 0..self.weights.len() {
            let wlen = self.weights[l].len();
            self.weights[l].copy_from_slice(&flat[idx..idx + wlen]);
            idx += wlen;
            let blen = self.biases[l].len();
            self.biases[l].copy_from_slice(&flat[idx..idx + blen]);
            idx += blen;
        }
        assert_eq!(idx, flat.len());
    }
}

/// Seeded uniform init scaled by fan-in/fan-out: U(-b, b), b = sqrt(6/(fan_in+fan_out)).
pub fn mlp_init<F: Real>(layout: &Layout, seed: u64) -> Result<MlpParams<F>> {
    layout.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..layout.sizes.len() - 1 {
        let fan_in = layout.sizes[l];
        let fan_out = layout.sizes[l + 1];
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w: Vec<F> = (0..fan_in * fan_out)
            .map(|_| F::of(rng.gen_range(-bound..bound)))
            .collect();
        weights.push(w);
        biases.push(vec![F::zero(); fan_out]);
    }
    Ok(MlpParams {
        layout: layout.clone(),
        weights,
        biases,
    })
}

fn apply_activation<F: Real>(act: Activation, z: &[F]) -> Vec<F> {
    match act {
        Activation::Linear => z.to_vec(),
        Activation::Relu => z.iter().map(|&x| if x > F::zero() { x } else { F::zero() }).collect(),
        Activation::Tanh => z.iter().map(|&x| x.tanh()).collect(),
        Activation::Softmax => {
            let max = z.iter().cloned().fold(F::neg_infinity(), F::max);
            let exps: Vec<F> = z.iter().map(|&x| (x - max).exp()).collect();
            let sum = exps.iter().fold(F::zero(), |a, &b| a + b);
            exps.iter().map(|&e| e / sum).collect()
        }
    }
}

struct ForwardTrace<F: Real> {
    // per layer: pre-activation z and activation a (a[0] is the input)
    zs: Vec<Vec<F>>,
    acts: Vec<Vec<F>>,
}

fn forward_trace<F: Real>(params: &MlpParams<F>, input: &[F]) -> Result<ForwardTrace<F>> {
    if input.len() != params.layout.input_dim() {
        return Err(TercError::DimensionMismatch(format!(
            "input length {} != first layer size {}",
            input.len(),
            params.layout.input_dim()
        )));
    }
    let mut acts = vec![input.to_vec()];
    let mut zs = Vec::new();
    for l in 0..params.weights.len() {
        let n_in = params.layout.sizes[l];
        let n_out = params.layout.sizes[l + 1];
        let prev = &acts[l];
        let mut z = params.biases[l].clone();
        let w = &params.weights[l];
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut acc = z[o];
            for i in 0..n_in {
                acc += row[i] * prev[i];
            }
            z[o] = acc;
        }
        let a = apply_activation(params.layout.activations[l], &z);
        zs.push(z);
        acts.push(a);
    }
    Ok(ForwardTrace { zs, acts })
}

/// Single forward pass.
pub fn mlp_forward<F: Real>(params: &MlpParams<F>, input: &[F]) -> Result<Vec<F>> {
    Ok(forward_trace(params, input)?.acts.last().unwrap().clone())
}

/// Loss tags supported by `mlp_grad`.
///
/// Target row conventions per sample:
/// - `Mse`: target vector, same length as the output.
/// - `Nll`: `[class_index]`, softmax head required.
/// - `Dv`: `[flag]`, 1 = joint sample, 0 = marginal sample; scalar output.
/// - `PgWeightedLogProb`: `[action_index, weight]`, softmax head required;
///   `entropy_coef` adds an entropy bonus to the maximized objective.
/// - `GaussianPg`: `[action, weight]`; the network outputs `[mean, ln sigma]`
///   with a linear head and the loss is the negative weighted Gaussian
///   log-likelihood, plus an entropy bonus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss<F: Real> {
    Mse,
    Nll,
    Dv,
    PgWeightedLogProb { entropy_coef: F },
    GaussianPg { entropy_coef: F },
}

/// Batch loss value and exact reverse-mode gradient.
///
/// The returned gradient is of the scalar loss that `value` reports; all
/// losses are means over the batch so gradients are batch-size independent.
pub fn mlp_grad<F: Real>(
    params: &MlpParams<F>,
    inputs: &[Vec<F>],
    targets: &[Vec<F>],
    loss: Loss<F>,
) -> Result<(MlpParams<F>, F)> {
    if inputs.is_empty() {
        return Err(TercError::InvalidArgument("empty batch".into()));
    }
    if inputs.len() != targets.len() {
        return Err(TercError::DimensionMismatch(format!(
            "{} inputs vs {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let traces: Vec<ForwardTrace<F>> = inputs
        .iter()
        .map(|x| forward_trace(params, x))
        .collect::<Result<_>>()?;
    let outputs: Vec<&Vec<F>> = traces.iter().map(|t| t.acts.last().unwrap()).collect();
    let head = *params.layout.activations.last().unwrap();
    let b = F::of(inputs.len() as f64);

    // Per-sample gradient of the loss w.r.t. the final *pre-activation* when
    // the head is softmax (dz), otherwise w.r.t. the output (dy).
    let mut out_grads: Vec<Vec<F>> = Vec::with_capacity(inputs.len());
    let mut loss_value = F::zero();
    match loss {
        Loss::Mse => {
            for (y, t) in outputs.iter().zip(targets) {
                if y.len() != t.len() {
                    return Err(TercError::DimensionMismatch(
                        "mse target length != output length".into(),
                    ));
                }
                let mut g = vec![F::zero(); y.len()];
                for k in 0..y.len() {
                    let r = y[k] - t[k];
                    loss_value += r * r / b;
                    g[k] = F::of(2.0) * r / b;
                }
                out_grads.push(g);
            }
        }
        Loss::Nll => {
            if head != Activation::Softmax {
                return Err(TercError::InvalidArgument(
                    "nll loss requires a softmax head".into(),
                ));
            }
            for (p, t) in outputs.iter().zip(targets) {
                let c = t[0].as_f64() as usize;
                if c >= p.len() {
                    return Err(TercError::InvalidArgument(format!(
                        "class index {c} out of range"
                    )));
                }
                loss_value -= p[c].max(F::of(1e-300)).ln() / b;
                let mut g: Vec<F> = p.iter().map(|&pk| pk / b).collect();
                g[c] -= F::one() / b;
                out_grads.push(g);
            }
        }
        Loss::PgWeightedLogProb { entropy_coef } => {
            if head != Activation::Softmax {
                return Err(TercError::InvalidArgument(
                    "pg loss requires a softmax head".into(),
                ));
            }
            // L = -(1/B) sum_i [ w_i ln p_i[a_i] + beta H(p_i) ]
            for (p, t) in outputs.iter().zip(targets) {
                let a = t[0].as_f64() as usize;
                let w = t[1];
                if a >= p.len() {
                    return Err(TercError::InvalidArgument(format!(
                        "action index {a} out of range"
                    )));
                }
                let logs: Vec<F> = p.iter().map(|&pk| pk.max(F::of(1e-300)).ln()).collect();
                let entropy = -p.iter().zip(&logs).fold(F::zero(), |acc, (&pk, &lk)| acc + pk * lk);
                loss_value -= (w * logs[a] + entropy_coef * entropy) / b;
                let mut g = vec![F::zero(); p.len()];
                for k in 0..p.len() {
                    // d(ln p[a])/dz_k = 1[k=a] - p_k ; dH/dz_k = -p_k (ln p_k + H)
                    let dlp = if k == a { F::one() - p[k] } else { -p[k] };
                    let dh = -p[k] * (logs[k] + entropy);
                    g[k] = -(w * dlp + entropy_coef * dh) / b;
                }
                out_grads.push(g);
            }
        }
        Loss::GaussianPg { entropy_coef } => {
            if params.layout.output_dim() != 2 || head == Activation::Softmax {
                return Err(TercError::InvalidArgument(
                    "gaussian pg loss requires a 2-output non-softmax head".into(),
                ));
            }
            // y = [mu, ln sigma]; L = -(1/B) sum w ln N(a; mu, sigma) - beta H
            let half_ln_2pi = F::of(0.5 * (2.0 * std::f64::consts::PI).ln());
            let half_ln_2pie = F::of(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln());
            for (y, t) in outputs.iter().zip(targets) {
                let (a, w) = (t[0], t[1]);
                let (mu, ln_sigma) = (y[0], y[1]);
                let sigma = ln_sigma.exp();
                let z = (a - mu) / sigma;
                let log_pdf = -F::of(0.5) * z * z - ln_sigma - half_ln_2pi;
                let entropy = ln_sigma + half_ln_2pie;
                loss_value -= (w * log_pdf + entropy_coef * entropy) / b;
                let d_mu = -(w * z / sigma) / b;
                let d_ln_sigma = -(w * (z * z - F::one()) + entropy_coef) / b;
                out_grads.push(vec![d_mu, d_ln_sigma]);
            }
        }
        Loss::Dv => {
            if params.layout.output_dim() != 1 {
                return Err(TercError::InvalidArgument(
                    "dv loss requires a scalar output".into(),
                ));
            }
            let mut joint = Vec::new();
            let mut marginal = Vec::new();
            for (i, t) in targets.iter().enumerate() {
                if t[0] > F::of(0.5) {
                    joint.push(i);
                } else {
                    marginal.push(i);
                }
            }
            if joint.is_empty() || marginal.is_empty() {
                return Err(TercError::InvalidArgument(
                    "dv loss needs both joint and marginal samples".into(),
                ));
            }
            let nj = F::of(joint.len() as f64);
            let nm = F::of(marginal.len() as f64);
            let joint_mean = joint.iter().fold(F::zero(), |acc, &i| acc + outputs[i][0]) / nj;
            // log-mean-exp with max subtraction
            let max = marginal
                .iter()
                .map(|&i| outputs[i][0])
                .fold(F::neg_infinity(), F::max);
            let exps: Vec<F> = marginal.iter().map(|&i| (outputs[i][0] - max).exp()).collect();
            let sum = exps.iter().fold(F::zero(), |a, &b| a + b);
            let lme = max + (sum / nm).ln();
            // minimize the negated DV bound
            loss_value = lme - joint_mean;
            let mut grads = vec![vec![F::zero()]; inputs.len()];
            for &i in &joint {
                grads[i][0] = -F::one() / nj;
            }
            for (k, &i) in marginal.iter().enumerate() {
                grads[i][0] = exps[k] / sum;
            }
            out_grads = grads;
        }
    }
    if !loss_value.is_finite() {
        return Err(TercError::NonFinite(format!(
            "loss value {:?} for {:?}",
            loss_value, loss
        )));
    }

    let mut grad = params.zeros_like();
    for (trace, dy) in traces.iter().zip(&out_grads) {
        backprop_sample(params, trace, dy, head_is_pre(&loss), &mut grad)?;
    }
    if !grad.is_finite() {
        return Err(TercError::NonFinite("gradient contains non-finite entries".into()));
    }
    Ok((grad, loss_value))
}

// Softmax-head losses hand back dL/dz directly; the others give dL/dy.
fn head_is_pre<F: Real>(loss: &Loss<F>) -> bool {
    matches!(loss, Loss::Nll | Loss::PgWeightedLogProb { .. })
}

fn backprop_sample<F: Real>(
    params: &MlpParams<F>,
    trace: &ForwardTrace<F>,
    out_grad: &[F],
    grad_is_pre_activation: bool,
    grad: &mut MlpParams<F>,
) -> Result<()> {
    let layers = params.weights.len();
    let mut delta: Vec<F>; // dL/dz for the current layer
    let last = layers - 1;
    if grad_is_pre_activation {
        delta = out_grad.to_vec();
    } else {
        delta = activation_backward(
            params.layout.activations[last],
            &trace.zs[last],
            &trace.acts[last + 1],
            out_grad,
        )?;
    }
    for l in (0..layers).rev() {
        let n_in = params.layout.sizes[l];
        let n_out = params.layout.sizes[l + 1];
        let prev = &trace.acts[l];
        let gw = &mut grad.weights[l];
        for o in 0..n_out {
            let d = delta[o];
            if d != F::zero() {
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    row[i] += d * prev[i];
                }
            }
            grad.biases[l][o] += d;
        }
        if l > 0 {
            let w = &params.weights[l];
            let mut da = vec![F::zero(); n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != F::zero() {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        da[i] += d * row[i];
                    }
                }
            }
            delta = activation_backward(
                params.layout.activations[l - 1],
                &trace.zs[l - 1],
                &trace.acts[l],
                &da,
            )?;
        }
    }
    Ok(())
}

fn activation_backward<F: Real>(
    act: Activation,
    z: &[F],
    a: &[F],
    da: &[F],
) -> Result<Vec<F>> {
    match act {
        Activation::Linear => Ok(da.to_vec()),
        Activation::Relu => Ok(z
            .iter()
            .zip(da)
            .map(|(&zk, &dk)| if zk > F::zero() { dk } else { F::zero() })
            .collect()),
        Activation::Tanh => Ok(a
            .iter()
            .zip(da)
            .map(|(&ak, &dk)| dk * (F::one() - ak * ak))
            .collect()),
        Activation::Softmax => {
            // dz_k = p_k (da_k - sum_j da_j p_j)
            let dot = a.iter().zip(da).fold(F::zero(), |acc, (&ak, &dk)| acc + ak * dk);
            Ok(a.iter().zip(da).map(|(&ak, &dk)| ak * (dk - dot)).collect())
        }
    }
}

/// Optimizer state: plain SGD or bias-corrected Adam.
#[derive(Debug, Clone)]
pub enum OptimState<F: Real> {
    Sgd {
        lr: F,
    },
    Adam {
        lr: F,
        beta1: F,
        beta2: F,
        eps: F,
        m: MlpParams<F>,
        v: MlpParams<F>,
        step: u64,
    },
}

impl<F: Real> OptimState<F> {
    pub fn sgd(lr: F) -> Self {
        OptimState::Sgd { lr }
    }

    pub fn adam(lr: F, params: &MlpParams<F>) -> Self {
        OptimState::Adam {
            lr,
            beta1: F::of(0.9),
            beta2: F::of(0.999),
            eps: F::of(1e-8),
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One in-place optimizer update.
pub fn opt_step<F: Real>(
    params: &mut MlpParams<F>,
    grad: &MlpParams<F>,
    state: &mut OptimState<F>,
) -> Result<()> {
    if !grad.is_finite() {
        return Err(TercError::NonFinite("gradient passed to opt_step".into()));
    }
    match state {
        OptimState::Sgd { lr } => {
            let lr = *lr;
            for l in 0..params.weights.len() {
                for (p, g) in params.weights[l].iter_mut().zip(&grad.weights[l]) {
                    *p -= lr * *g;
                }
                for (p, g) in params.biases[l].iter_mut().zip(&grad.biases[l]) {
                    *p -= lr * *g;
                }
            }
        }
        OptimState::Adam {
            lr,
            beta1,
            beta2,
            eps,
            m,
            v,
            step,
        } => {
            *step += 1;
            let t = F::of(*step as f64);
            let (b1, b2) = (*beta1, *beta2);
            let bc1 = F::one() - b1.powf(t);
            let bc2 = F::one() - b2.powf(t);
            for l in 0..params.weights.len() {
                for part in 0..2 {
                    let (pv, gv, mv, vv) = if part == 0 {
                        (
                            &mut params.weights[l],
                            &grad.weights[l],
                            &mut m.weights[l],
                            &mut v.weights[l],
                        )
                    } else {
                        (
                            &mut params.biases[l],
                            &grad.biases[l],
                            &mut m.biases[l],
                            &mut v.biases[l],
                        )
                    };
                    for i in 0..pv.len() {
                        mv[i] = b1 * mv[i] + (F::one() - b1) * gv[i];
                        vv[i] = b2 * vv[i] + (F::one() - b2) * gv[i] * gv[i];
                        let mhat = mv[i] / bc1;
                        let vhat = vv[i] / bc2;
                        pv[i] -= *lr * mhat / (vhat.sqrt() + *eps);
                    }
                }
            }
        }
    }
    if !params.is_finite() {
        return Err(TercError::NonFinite("parameters after opt_step".into()));
    }
    Ok(())
}

/// Versioned JSON checkpoint: layout plus flat f64 weight/bias arrays, in the
/// `flat()` order (per layer, weights row-major then bias).
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub layout: Layout,
    pub params: Vec<f64>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint<F: Real>(params: &MlpParams<F>, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        layout: params.layout.clone(),
        params: params.flat().iter().map(|x| x.as_f64()).collect(),
    };
    std::fs::write(path, serde_json::to_string(&ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<MlpParams<F>> {
    let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(TercError::Config(format!(
            "unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    let mut params = mlp_init::<F>(&ckpt.layout, 0)?;
    let flat: Vec<F> = ckpt.params.iter().map(|&x| F::of(x)).collect();
    if flat.len() != params.flat().len() {
        return Err(TercError::DimensionMismatch(
            "checkpoint parameter count does not match layout".into(),
        ));
    }
    params.set_flat(&flat);
    Ok(params)
}
