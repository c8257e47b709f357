//! Transfer-entropy based state variable selection for reinforcement learning.
//!
//! Pipeline: train an agent on the full state, estimate how much entropy each
//! state variable transfers to the actions, select the minimal informative
//! subset (robust to perfect conditional redundancy), and retrain on the
//! reduced state. Exact plug-in estimators on discrete samples back every
//! identity; a neural Donsker-Varadhan estimator covers the continuous and
//! high-dimensional cases.

pub mod error;
pub mod estimators;
pub mod neural;
pub mod baselines;
pub mod cli;
pub mod envs;
pub mod rl;
pub mod selection;
pub mod traj;
pub mod table;

pub use error::{Result, TercError};

/// Scalar type used by the analysis pipeline.
pub type Scalar = f64;
/// Network parameters at the pipeline's precision.
pub type Mlp = neural::MlpParams<f64>;
/// Single-precision variant.
pub type Mlp32 = neural::MlpParams<f32>;
/// Optimizer state at the pipeline's precision.
pub type Optim = neural::OptimState<f64>;
