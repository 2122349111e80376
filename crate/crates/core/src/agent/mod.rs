//! PPO learner: policy and value networks, advantage estimation, clipped
//! updates and the regime curriculum.

mod gae;
pub mod nn;
mod normalize;
mod policy;
mod ppo;
mod train;

use serde::{Deserialize, Serialize};

use crate::env::EnvState;
use crate::error::{Error, Result};

pub use gae::compute_gae;
pub use nn::{Adam, AdamConfig, Mlp, MlpCache};
pub use normalize::RewardNormalizer;
pub use policy::{act_greedy, greedy_from_probs, log_softmax, policy_forward, sample_action, softmax, ActorCritic};
pub use ppo::{ppo_loss_and_grad, ppo_update, LossBreakdown, PpoBatch, UpdateStats};
pub use train::{
    derive_seed, train_curriculum, train_seed, training_log_csv, EnvFactory, TrainedPolicy, TrainingLogRow,
    TrainingRun, TRAINING_LOG_HEADER,
};

pub const OBS_DIM: usize = 7;

/// `(R, L, V, K, nu, M, level / 3)`.
pub fn observe(state: &EnvState) -> [f64; OBS_DIM] {
    [
        state.reserve,
        state.incurred,
        state.volatility,
        state.capital_efficiency(),
        state.violation_memory,
        state.shock,
        f64::from(state.level) / 3.0,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub epochs_per_update: usize,
    pub gamma: f64,
    pub clip_range: f64,
    pub entropy_coef: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub reward_norm: bool,
    /// Reset reward-normalization statistics at each curriculum level.
    pub reset_reward_norm_per_level: bool,
    pub hidden: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 2048,
            minibatch_size: 256,
            epochs_per_update: 10,
            gamma: 0.99,
            clip_range: 0.2,
            entropy_coef: 0.01,
            gae_lambda: 0.95,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            reward_norm: true,
            reset_reward_norm_per_level: false,
            hidden: 64,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("ppo: {m}")));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in (0, 1)");
        }
        if !(self.clip_range > 0.0 && self.clip_range < 1.0) {
            return bad("clip_range must be in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must be in [0, 1]");
        }
        if self.batch_size == 0 || self.minibatch_size == 0 || self.epochs_per_update == 0 || self.hidden == 0 {
            return bad("batch, minibatch, epoch and hidden sizes must be positive");
        }
        if !(self.learning_rate > 0.0 && self.max_grad_norm > 0.0) {
            return bad("learning_rate and max_grad_norm must be positive");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return bad("loss coefficients must be non-negative");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}
