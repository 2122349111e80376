use rand::Rng;

use super::nn::{Adam, Mlp, MlpCache};
use super::{PpoConfig, OBS_DIM};
use crate::env::N_ACTIONS;
use crate::error::{Error, Result};

/// Separate policy and value networks with their optimizer states.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub policy: Mlp,
    pub value: Mlp,
    pub policy_opt: Adam,
    pub value_opt: Adam,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(cfg: &PpoConfig, rng: &mut R) -> Self {
        let h = cfg.hidden;
        let policy = Mlp::orthogonal(&[OBS_DIM, h, h, N_ACTIONS], std::f64::consts::SQRT_2, 0.01, rng);
        let value = Mlp::orthogonal(&[OBS_DIM, h, h, 1], std::f64::consts::SQRT_2, 1.0, rng);
        Self::from_networks(policy, value, cfg)
    }

    pub fn from_networks(policy: Mlp, value: Mlp, cfg: &PpoConfig) -> Self {
        let policy_opt = Adam::new(policy.n_params(), cfg.adam());
        let value_opt = Adam::new(value.n_params(), cfg.adam());
        Self { policy, value, policy_opt, value_opt }
    }

    pub fn value_of(&self, obs: &[f64], cache: &mut MlpCache) -> f64 {
        self.value.forward(obs, cache)[0]
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Action probabilities for one observation.
pub fn policy_forward(policy: &Mlp, obs: &[f64], cache: &mut MlpCache) -> Result<Vec<f64>> {
    if obs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteActivation);
    }
    let logits = policy.forward(obs, cache);
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteActivation);
    }
    Ok(softmax(logits))
}

pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Indices ordered by adjustment magnitude, negative side first.
const TIE_ORDER: [usize; N_ACTIONS] = [3, 2, 4, 1, 5, 0, 6];

/// Argmax; exact ties resolve to the smaller magnitude, then the cut.
pub fn greedy_from_probs(probs: &[f64]) -> usize {
    let mut best = TIE_ORDER[0];
    for &i in &TIE_ORDER[1..] {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    best
}

pub fn act_greedy(policy: &Mlp, obs: &[f64], cache: &mut MlpCache) -> Result<usize> {
    Ok(greedy_from_probs(&policy_forward(policy, obs, cache)?))
}
