use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Mlp, MlpCache};
use super::normalize::RewardNormalizer;
use super::policy::{act_greedy, policy_forward, sample_action, ActorCritic};
use super::ppo::{ppo_update, PpoBatch, UpdateStats};
use super::{compute_gae, observe, PpoConfig, OBS_DIM};
use crate::env::{ReservingEnv, ACTION_GRID, N_ACTIONS};
use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::regimes::{CurriculumSchedule, RegimeTable};

/// Builds an environment from a derived seed.
pub trait EnvFactory: Fn(u64) -> Result<ReservingEnv> + Sync {}
impl<F: Fn(u64) -> Result<ReservingEnv> + Sync> EnvFactory for F {}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-seed for `stream` under a base seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

const ENV_STREAM: u64 = 1;
const AGENT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogRow {
    pub seed: u64,
    pub level: u8,
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_shortfall: f64,
    pub mean_cvar: f64,
    pub violation_rate: f64,
}

pub const TRAINING_LOG_HEADER: &str = "seed,level,episode,mean_reward,mean_shortfall,mean_cvar,violation_rate";

pub fn training_log_csv(rows: &[TrainingLogRow]) -> String {
    let mut out = String::from(TRAINING_LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.seed, r.level, r.episode, r.mean_reward, r.mean_shortfall, r.mean_cvar, r.violation_rate
        ));
    }
    out
}

/// Final networks of one training seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy {
    pub seed: u64,
    pub config_fingerprint: String,
    pub policy: Mlp,
    pub value: Mlp,
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    layer_sizes: Vec<usize>,
    shapes: Vec<Vec<usize>>,
    coefficients: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct NetworksDoc {
    policy: NetworkDoc,
    value: NetworkDoc,
}

#[derive(Serialize, Deserialize)]
struct PolicyDoc {
    seed: u64,
    config_fingerprint: String,
    action_grid: Vec<f64>,
    networks: NetworksDoc,
}

impl NetworkDoc {
    fn from_mlp(net: &Mlp) -> Self {
        let mut shapes = Vec::new();
        let mut coefficients = Vec::new();
        for (fan_in, fan_out, w, b) in net.layers() {
            shapes.push(vec![fan_out, fan_in]);
            coefficients.push(w.to_vec());
            shapes.push(vec![fan_out]);
            coefficients.push(b.to_vec());
        }
        Self { layer_sizes: net.sizes().to_vec(), shapes, coefficients }
    }

    fn into_mlp(self) -> Result<Mlp> {
        for (shape, data) in self.shapes.iter().zip(&self.coefficients) {
            if shape.iter().product::<usize>() != data.len() {
                return Err(Error::LengthMismatch(format!("tensor {shape:?} has {} coefficients", data.len())));
            }
        }
        let expected: Vec<Vec<usize>> = self
            .layer_sizes
            .windows(2)
            .flat_map(|w| [vec![w[1], w[0]], vec![w[1]]])
            .collect();
        if expected != self.shapes {
            return Err(Error::LengthMismatch("tensor shapes do not match layer sizes".into()));
        }
        Mlp::from_parts(self.layer_sizes, self.coefficients.concat())
    }
}

impl TrainedPolicy {
    pub fn to_json(&self) -> String {
        let doc = PolicyDoc {
            seed: self.seed,
            config_fingerprint: self.config_fingerprint.clone(),
            action_grid: ACTION_GRID.to_vec(),
            networks: NetworksDoc {
                policy: NetworkDoc::from_mlp(&self.policy),
                value: NetworkDoc::from_mlp(&self.value),
            },
        };
        serde_json::to_string_pretty(&doc).expect("policy document serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        let doc: PolicyDoc = serde_json::from_str(text)?;
        let policy = doc.networks.policy.into_mlp().map_err(serde::de::Error::custom)?;
        let value = doc.networks.value.into_mlp().map_err(serde::de::Error::custom)?;
        if policy.input_size() != OBS_DIM || policy.output_size() != N_ACTIONS || value.output_size() != 1 {
            return Err(serde::de::Error::custom("network dimensions do not match the environment"));
        }
        Ok(Self { seed: doc.seed, config_fingerprint: doc.config_fingerprint, policy, value })
    }

    pub fn greedy(&self, obs: &[f64], cache: &mut MlpCache) -> Result<usize> {
        act_greedy(&self.policy, obs, cache)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub policy: TrainedPolicy,
    pub log: Vec<TrainingLogRow>,
    pub updates: Vec<UpdateStats>,
}

#[derive(Default)]
struct Rollout {
    obs: Vec<[f64; OBS_DIM]>,
    actions: Vec<usize>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
}

impl Rollout {
    fn len(&self) -> usize {
        self.obs.len()
    }

    fn take_batch(&mut self, cfg: &PpoConfig) -> Result<PpoBatch> {
        let (advantages, returns) = compute_gae(&self.rewards, &self.values, &self.dones, cfg.gamma, cfg.gae_lambda)?;
        let batch = PpoBatch {
            obs: std::mem::take(&mut self.obs),
            actions: std::mem::take(&mut self.actions),
            old_log_probs: std::mem::take(&mut self.log_probs),
            advantages,
            returns,
        };
        *self = Self::default();
        Ok(batch)
    }
}

/// Runs the curriculum for one seed. Whole episodes are collected until at
/// least `batch_size` transitions are pending, then one update runs;
/// leftovers are flushed at the end of each level.
pub fn train_seed(
    factory: &impl EnvFactory,
    cfg: &PpoConfig,
    schedule: &CurriculumSchedule,
    regimes: &RegimeTable,
    seed: u64,
    config_fingerprint: &str,
) -> Result<TrainingRun> {
    cfg.validate()?;
    schedule.validate()?;
    let mut env = factory(derive_seed(seed, ENV_STREAM))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, AGENT_STREAM));
    let mut ac = ActorCritic::new(cfg, &mut rng);
    let mut normalizer = RewardNormalizer::new(cfg.gamma);
    let mut rollout = Rollout::default();
    let mut log = Vec::new();
    let mut updates = Vec::new();
    let (mut pc, mut vc) = (MlpCache::default(), MlpCache::default());
    let mut episode = 0usize;

    for (stage, &level) in schedule.levels.iter().enumerate() {
        env.clear_buffer();
        if cfg.reset_reward_norm_per_level {
            normalizer.reset();
        }
        log::info!("seed {seed}: training level {level}");
        for k in 0..schedule.episodes_per_level {
            env.set_regime(schedule.regime_for(regimes, stage, k)?);
            let mut state = env.reset();
            let (mut sum_r, mut sum_s, mut sum_c, mut n_viol, mut steps) = (0.0, 0.0, 0.0, 0usize, 0usize);
            loop {
                let obs = observe(&state);
                let probs = policy_forward(&ac.policy, &obs, &mut pc)?;
                let action = sample_action(&probs, &mut rng);
                let value = ac.value_of(&obs, &mut vc);
                let out = env.step(action)?;
                let reward = if cfg.reward_norm { normalizer.normalize(out.reward, out.done) } else { out.reward };
                rollout.obs.push(obs);
                rollout.actions.push(action);
                rollout.log_probs.push(probs[action].ln());
                rollout.values.push(value);
                rollout.rewards.push(reward);
                rollout.dones.push(out.done);
                sum_r += out.reward;
                sum_s += out.components.shortfall;
                sum_c += out.components.cvar;
                n_viol += usize::from(out.components.violated);
                steps += 1;
                state = out.next_state;
                if out.done {
                    break;
                }
            }
            let n = steps as f64;
            log.push(TrainingLogRow {
                seed,
                level,
                episode,
                mean_reward: sum_r / n,
                mean_shortfall: sum_s / n,
                mean_cvar: sum_c / n,
                violation_rate: n_viol as f64 / n,
            });
            episode += 1;
            if rollout.len() >= cfg.batch_size {
                let batch = rollout.take_batch(cfg)?;
                let stats = ppo_update(&mut ac, &batch, cfg, &mut rng)?;
                log::debug!("seed {seed} episode {episode}: {stats:?}");
                updates.push(stats);
            }
        }
        if rollout.len() > 0 {
            let batch = rollout.take_batch(cfg)?;
            updates.push(ppo_update(&mut ac, &batch, cfg, &mut rng)?);
        }
    }
    Ok(TrainingRun {
        policy: TrainedPolicy {
            seed,
            config_fingerprint: config_fingerprint.to_string(),
            policy: ac.policy,
            value: ac.value,
        },
        log,
        updates,
    })
}

/// Trains every seed, spreading seeds over at most `workers` threads.
/// Results follow the order of `seeds`.
pub fn train_curriculum(
    factory: &impl EnvFactory,
    cfg: &PpoConfig,
    schedule: &CurriculumSchedule,
    regimes: &RegimeTable,
    seeds: &[u64],
    workers: usize,
    config_fingerprint: &str,
) -> Result<Vec<TrainingRun>> {
    par_map(seeds, workers, |&seed| train_seed(factory, cfg, schedule, regimes, seed, config_fingerprint))
        .into_iter()
        .collect()
}
