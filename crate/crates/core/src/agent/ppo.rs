use rand::seq::SliceRandom;
use rand::Rng;

use super::nn::{Mlp, MlpCache};
use super::policy::{log_softmax, ActorCritic};
use super::{PpoConfig, OBS_DIM};
use crate::error::{Error, Result};

/// Flattened transitions with targets, ready for an update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PpoBatch {
    pub obs: Vec<[f64; OBS_DIM]>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.obs.len();
        if [self.actions.len(), self.old_log_probs.len(), self.advantages.len(), self.returns.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::LengthMismatch("batch columns differ in length".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    /// `policy_loss + value_coef * value_loss - entropy_coef * entropy`.
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// PPO loss over the transitions `idx` of `batch` and its gradients with
/// respect to the policy and value parameters. Advantages are used as
/// stored.
pub fn ppo_loss_and_grad(
    policy: &Mlp,
    value: &Mlp,
    batch: &PpoBatch,
    idx: &[usize],
    cfg: &PpoConfig,
) -> Result<(LossBreakdown, Vec<f64>, Vec<f64>)> {
    if idx.is_empty() {
        return Err(Error::EmptyBatch);
    }
    batch.check()?;
    let b = idx.len() as f64;
    let eps = cfg.clip_range;
    let mut gp = vec![0.0; policy.n_params()];
    let mut gv = vec![0.0; value.n_params()];
    let mut out = LossBreakdown::default();
    let mut pc = MlpCache::default();
    let mut vc = MlpCache::default();
    let mut dz = vec![0.0; policy.output_size()];
    let mut clipped = 0usize;

    for &i in idx {
        let obs = &batch.obs[i];
        let a = batch.actions[i];
        let adv = batch.advantages[i];

        let logits = policy.forward(obs, &mut pc);
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFiniteActivation);
        }
        let logp = log_softmax(logits);
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let entropy = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();

        let log_ratio = logp[a] - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let unclipped = ratio * adv;
        let clipped_obj = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        out.policy_loss -= unclipped.min(clipped_obj);
        out.entropy += entropy;
        out.approx_kl += (ratio - 1.0) - log_ratio;
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }

        // gradient of -min(...) flows only through the unclipped branch
        let g = if unclipped <= clipped_obj { ratio * adv } else { 0.0 };
        for j in 0..dz.len() {
            let onehot = if j == a { 1.0 } else { 0.0 };
            dz[j] = -g * (onehot - probs[j]) / b + cfg.entropy_coef * probs[j] * (logp[j] + entropy) / b;
        }
        policy.backward(&pc, &dz, &mut gp);

        let v = value.forward(obs, &mut vc)[0];
        let err = v - batch.returns[i];
        out.value_loss += err * err;
        value.backward(&vc, &[2.0 * cfg.value_coef * err / b], &mut gv);
    }

    out.policy_loss /= b;
    out.value_loss /= b;
    out.entropy /= b;
    out.approx_kl /= b;
    out.clip_fraction = clipped as f64 / b;
    out.total = out.policy_loss + cfg.value_coef * out.value_loss - cfg.entropy_coef * out.entropy;
    Ok((out, gp, gv))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Mean global gradient norm before clipping.
    pub grad_norm: f64,
    pub n_minibatches: usize,
}

/// Normalizes advantages, then runs `epochs_per_update` passes of shuffled
/// minibatch Adam steps with global gradient-norm clipping.
pub fn ppo_update<R: Rng + ?Sized>(
    ac: &mut ActorCritic,
    batch: &PpoBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    batch.check()?;
    let n = batch.len();
    let mean = batch.advantages.iter().sum::<f64>() / n as f64;
    let sd = (batch.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let normed = PpoBatch {
        advantages: batch.advantages.iter().map(|a| (a - mean) / (sd + 1e-8)).collect(),
        ..batch.clone()
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let (loss, mut gp, mut gv) = ppo_loss_and_grad(&ac.policy, &ac.value, &normed, chunk, cfg)?;
            let norm = gp.iter().chain(&gv).map(|g| g * g).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFiniteGradient);
            }
            if norm > cfg.max_grad_norm {
                let scale = cfg.max_grad_norm / (norm + 1e-6);
                gp.iter_mut().chain(gv.iter_mut()).for_each(|g| *g *= scale);
            }
            ac.policy_opt.step(ac.policy.params_mut(), &gp);
            ac.value_opt.step(ac.value.params_mut(), &gv);

            stats.policy_loss += loss.policy_loss;
            stats.value_loss += loss.value_loss;
            stats.entropy += loss.entropy;
            stats.clip_fraction += loss.clip_fraction;
            stats.approx_kl += loss.approx_kl;
            stats.grad_norm += norm;
            stats.n_minibatches += 1;
        }
    }
    if ac.policy.params().iter().chain(ac.value.params()).any(|p| !p.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let k = stats.n_minibatches as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    stats.approx_kl /= k;
    stats.grad_norm /= k;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn batch_for(ac: &ActorCritic, rng: &mut ChaCha8Rng, n: usize, adv_scale: f64) -> PpoBatch {
        let mut b = PpoBatch::default();
        let mut cache = MlpCache::default();
        for _ in 0..n {
            let obs: [f64; OBS_DIM] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let a = rng.random_range(0..7);
            let lp = log_softmax(ac.policy.forward(&obs, &mut cache))[a];
            b.obs.push(obs);
            b.actions.push(a);
            b.old_log_probs.push(lp + rng.random_range(-0.1..0.1));
            b.advantages.push(adv_scale * rng.random_range(-1.0..1.0));
            b.returns.push(rng.random_range(-2.0..0.0));
        }
        b
    }

    #[test]
    fn zero_advantage_moves_policy_by_entropy_only() {
        let cfg = PpoConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ac = ActorCritic::new(&cfg, &mut rng);
        let b = batch_for(&ac, &mut rng, 16, 0.0);
        let idx: Vec<usize> = (0..16).collect();
        let (_, gp, _) = ppo_loss_and_grad(&ac.policy, &ac.value, &b, &idx, &cfg).unwrap();
        let no_ent = PpoConfig { entropy_coef: 0.0, ..cfg.clone() };
        let (_, gp0, _) = ppo_loss_and_grad(&ac.policy, &ac.value, &b, &idx, &no_ent).unwrap();
        assert!(gp.iter().any(|g| *g != 0.0));
        assert!(gp0.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn forced_ratio_is_clipped() {
        let cfg = PpoConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ac = ActorCritic::new(&cfg, &mut rng);
        let mut b = batch_for(&ac, &mut rng, 8, 1.0);
        for i in 0..8 {
            b.old_log_probs[i] -= 1.0;
            b.advantages[i] = 1.0;
        }
        let idx: Vec<usize> = (0..8).collect();
        let (loss, _, _) = ppo_loss_and_grad(&ac.policy, &ac.value, &b, &idx, &cfg).unwrap();
        assert_eq!(loss.clip_fraction, 1.0);
        assert!((loss.policy_loss + 1.2).abs() < 1e-12);
    }

    #[test]
    fn empty_batch() {
        let cfg = PpoConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ac = ActorCritic::new(&cfg, &mut rng);
        let b = PpoBatch::default();
        assert!(matches!(ppo_update(&mut ac, &b, &cfg, &mut rng), Err(Error::EmptyBatch)));
        assert!(matches!(ppo_loss_and_grad(&ac.policy, &ac.value, &b, &[], &cfg), Err(Error::EmptyBatch)));
    }

    #[test]
    fn update_reduces_value_error() {
        let cfg = PpoConfig { learning_rate: 1e-3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ac = ActorCritic::new(&cfg, &mut rng);
        let b = batch_for(&ac, &mut rng, 256, 1.0);
        let idx: Vec<usize> = (0..256).collect();
        let before = ppo_loss_and_grad(&ac.policy, &ac.value, &b, &idx, &cfg).unwrap().0.value_loss;
        let stats = ppo_update(&mut ac, &b, &cfg, &mut rng).unwrap();
        let after = ppo_loss_and_grad(&ac.policy, &ac.value, &b, &idx, &cfg).unwrap().0.value_loss;
        assert!(after < before);
        assert_eq!(stats.n_minibatches, 10);
    }
}
