//! The sequential reserving environment.
//!
//! One step, in order: adjust the reserve, develop incurred losses, refresh
//! the volatility proxy, record the shortfall, estimate tail risk at the
//! volatility-adapted level, test the new reserve against the solvency
//! floor, update violation memory and assemble the reward.
//!
//! Loss development uses
//! `L' = max(0, L * (1 + (f - 1) * M + eps))`, `eps ~ N(0, (kappa * sd)^2)`,
//! so `M = 1` with `kappa = 0` reproduces the chain-ladder projection and the
//! shock scales incremental development. `sd` is the regime standard
//! deviation (calm level under fixed shocks).

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regimes::{shock_for_step, ActiveRegime, RegimeTable, ShockMode, FIXED_SHOCK_NOISE_VAR};
use crate::risk::{adaptive_alpha, ShortfallBuffer, DEFAULT_BUFFER_CAPACITY, DEFAULT_WARMUP_MIN};
use crate::triangles::{DevelopmentFactors, LossTriangle};

/// Proportional reserve adjustments, index 3 is "hold".
pub const ACTION_GRID: [f64; 7] = [-0.10, -0.066, -0.033, 0.0, 0.033, 0.066, 0.10];
pub const N_ACTIONS: usize = ACTION_GRID.len();
pub const HOLD_ACTION: usize = 3;

/// Smoothing of the violation memory.
pub const VIOLATION_DECAY: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub reserve: f64,
    pub incurred: f64,
    pub volatility: f64,
    pub violation_memory: f64,
    pub shock: f64,
    pub level: u8,
    pub t: usize,
}

impl EnvState {
    /// `K = 1 - |R - L|`, always derived from the current pair.
    pub fn capital_efficiency(&self) -> f64 {
        1.0 - (self.reserve - self.incurred).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub shortfall: f64,
    pub cvar: f64,
    pub capital: f64,
    pub violation: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { shortfall: 5.0, cvar: 8.0, capital: 1.0, violation: 10.0 }
    }
}

/// Floor `base + slope * V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolvencyFloor {
    pub base: f64,
    pub slope: f64,
}

impl SolvencyFloor {
    pub const DEFAULT: Self = Self { base: 0.4, slope: 0.2 };
    pub const STRICT: Self = Self { base: 0.5, slope: 0.3 };

    pub fn level(&self, volatility: f64) -> f64 {
        self.base + self.slope * volatility
    }

    pub fn breached(&self, reserve: f64, volatility: f64) -> bool {
        reserve < self.level(volatility)
    }

    pub fn label(&self) -> String {
        format!("{}+{}V", self.base, self.slope)
    }
}

impl Default for SolvencyFloor {
    fn default() -> Self {
        Self::DEFAULT
    }
}

pub fn solvency_floor(volatility: f64) -> f64 {
    SolvencyFloor::DEFAULT.level(volatility)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaMode {
    Adaptive,
    Fixed(f64),
}

impl AlphaMode {
    pub fn alpha(&self, volatility: f64) -> f64 {
        match *self {
            AlphaMode::Adaptive => adaptive_alpha(volatility),
            AlphaMode::Fixed(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardComponents {
    pub shortfall: f64,
    pub cvar: f64,
    pub cap_inefficiency: f64,
    pub violated: bool,
    pub floor: f64,
    pub alpha: f64,
}

pub fn compute_reward(c: &RewardComponents, w: &RewardWeights) -> f64 {
    -(w.shortfall * c.shortfall
        + w.cvar * c.cvar
        + w.capital * c.cap_inefficiency
        + if c.violated { w.violation } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub action: usize,
    pub reward: f64,
    pub components: RewardComponents,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub horizon: usize,
    pub weights: RewardWeights,
    pub vol_window: usize,
    pub vol_scale: f64,
    pub noise_gain: f64,
    pub shock_mode: ShockMode,
    pub seed: u64,
    pub floor: SolvencyFloor,
    pub alpha_mode: AlphaMode,
    pub buffer_capacity: usize,
    pub warmup_min: usize,
}

impl EnvConfig {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            weights: RewardWeights::default(),
            vol_window: 4,
            vol_scale: 0.5,
            noise_gain: 1.0,
            shock_mode: ShockMode::Stochastic { level: 0 },
            seed: 0,
            floor: SolvencyFloor::DEFAULT,
            alpha_mode: AlphaMode::Adaptive,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            warmup_min: DEFAULT_WARMUP_MIN,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::ConfigMismatch(format!("horizon {} < 2", self.horizon)));
        }
        if self.vol_window < 2 {
            return Err(Error::ConfigMismatch(format!("vol_window {} < 2", self.vol_window)));
        }
        if !(self.vol_scale > 0.0) {
            return Err(Error::ConfigMismatch("vol_scale must be positive".into()));
        }
        if !(self.noise_gain >= 0.0) {
            return Err(Error::ConfigMismatch("noise_gain must be non-negative".into()));
        }
        if let ShockMode::FixedShock { m } = self.shock_mode {
            if !(m > 0.0) {
                return Err(Error::ConfigMismatch(format!("fixed shock {m} must be positive")));
            }
        }
        if let AlphaMode::Fixed(a) = self.alpha_mode {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidAlpha(a));
            }
        }
        let w = &self.weights;
        if [w.shortfall, w.cvar, w.capital, w.violation].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::ConfigMismatch("reward weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// `max(0, R * (1 + a))` for a grid adjustment `a`.
pub fn apply_action(reserve: f64, adjustment: f64) -> Result<f64> {
    if !ACTION_GRID.contains(&adjustment) {
        return Err(Error::ActionOutOfGrid(adjustment));
    }
    Ok((reserve * (1.0 + adjustment)).max(0.0))
}

/// Deterministic part of the development step for a given noise draw.
pub fn develop_with_noise(incurred: f64, factor: f64, shock: f64, noise: f64) -> f64 {
    (incurred * (1.0 + (factor - 1.0) * shock + noise)).max(0.0)
}

/// One development step. Always consumes exactly one normal draw, so two
/// runs with the same seed see the same noise whatever `noise_gain` is.
pub fn develop_losses<R: Rng + ?Sized>(
    incurred: f64,
    factor: f64,
    shock: f64,
    regime_var: f64,
    noise_gain: f64,
    rng: &mut R,
) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    develop_with_noise(incurred, factor, shock, noise_gain * regime_var.sqrt() * z)
}

/// Population standard deviation of recent growth rates over `vol_scale`,
/// clipped to 1. Zero with fewer than two observations.
pub fn volatility_proxy(recent_growth: &[f64], vol_scale: f64) -> f64 {
    let n = recent_growth.len();
    if n < 2 {
        return 0.0;
    }
    let mean = recent_growth.iter().sum::<f64>() / n as f64;
    let var = recent_growth.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n as f64;
    (var.sqrt() / vol_scale).min(1.0)
}

pub fn update_violation_memory(previous: f64, violated: bool) -> f64 {
    VIOLATION_DECAY * previous + (1.0 - VIOLATION_DECAY) * if violated { 1.0 } else { 0.0 }
}

/// Accident year an episode starts from, in normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStart {
    pub accident_year: i32,
    pub initial_incurred: f64,
    pub premium: f64,
}

#[derive(Debug, Clone)]
pub struct ReservingEnv {
    starts: Vec<EpisodeStart>,
    factors: DevelopmentFactors,
    config: EnvConfig,
    regime: ActiveRegime,
    rng: ChaCha8Rng,
    buffer: ShortfallBuffer,
    state: EnvState,
    start: EpisodeStart,
    growth: VecDeque<f64>,
    growth_scratch: Vec<f64>,
    done: bool,
}

impl ReservingEnv {
    /// Episodes start from the lag-1 incurred of the accident years in
    /// `triangle` (normalized), developed with `factors`.
    pub fn new(
        triangle: &LossTriangle,
        factors: &DevelopmentFactors,
        config: EnvConfig,
        regimes: &RegimeTable,
    ) -> Result<Self> {
        config.validate()?;
        if config.horizon > triangle.n_dev_lags() {
            return Err(Error::ConfigMismatch(format!(
                "horizon {} exceeds triangle depth {}",
                config.horizon,
                triangle.n_dev_lags()
            )));
        }
        if factors.len() + 1 < config.horizon {
            return Err(Error::ConfigMismatch(format!(
                "{} development factors cannot cover horizon {}",
                factors.len(),
                config.horizon
            )));
        }
        let starts: Vec<EpisodeStart> = triangle
            .accident_years()
            .iter()
            .filter_map(|&y| {
                triangle.get(y, 1).map(|c| EpisodeStart {
                    accident_year: y,
                    initial_incurred: c.cum_incurred,
                    premium: c.earned_premium,
                })
            })
            .collect();
        if starts.is_empty() {
            return Err(Error::ConfigMismatch("triangle has no lag-1 cells".into()));
        }
        let regime = match config.shock_mode {
            ShockMode::Stochastic { level } => regimes.get(level)?.into(),
            ShockMode::FixedShock { m } => ActiveRegime {
                level: regimes.nearest_level(m),
                mu: m,
                var: FIXED_SHOCK_NOISE_VAR,
            },
        };
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let buffer = ShortfallBuffer::new(config.buffer_capacity, config.warmup_min);
        let window = config.vol_window;
        Ok(Self {
            start: starts[0],
            starts,
            factors: factors.clone(),
            config,
            regime,
            rng,
            buffer,
            state: EnvState {
                reserve: 0.0,
                incurred: 0.0,
                volatility: 0.0,
                violation_memory: 0.0,
                shock: 1.0,
                level: regime.level,
                t: 0,
            },
            growth: VecDeque::with_capacity(window),
            growth_scratch: Vec::with_capacity(window),
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn regime(&self) -> ActiveRegime {
        self.regime
    }

    /// Replaces the regime used for subsequent shocks and noise. Ignored in
    /// fixed-shock mode.
    pub fn set_regime(&mut self, regime: ActiveRegime) {
        if let ShockMode::Stochastic { .. } = self.config.shock_mode {
            self.regime = regime;
        }
    }

    pub fn buffer(&self) -> &ShortfallBuffer {
        &self.buffer
    }

    pub fn clear_buffer(&mut self) {
        self.buffer.clear();
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn episode_start(&self) -> EpisodeStart {
        self.start
    }

    pub fn starts(&self) -> &[EpisodeStart] {
        &self.starts
    }

    pub fn factors(&self) -> &DevelopmentFactors {
        &self.factors
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Draws an accident year uniformly and starts adequately reserved.
    pub fn reset(&mut self) -> EnvState {
        let idx = self.rng.random_range(0..self.starts.len());
        self.start = self.starts[idx];
        let l0 = self.start.initial_incurred;
        let shock = shock_for_step(self.config.shock_mode, self.regime, &mut self.rng);
        self.growth.clear();
        self.state = EnvState {
            reserve: l0,
            incurred: l0,
            volatility: 0.0,
            violation_memory: 0.0,
            shock,
            level: self.regime.level,
            t: 0,
        };
        self.done = false;
        self.state
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let adjustment = *ACTION_GRID.get(action).ok_or(Error::ActionOutOfGrid(action as f64))?;
        let s = self.state;
        let cfg = &self.config;

        let reserve = apply_action(s.reserve, adjustment)?;
        let factor = self.factors.leaving(s.t + 1);
        let incurred = develop_losses(s.incurred, factor, s.shock, self.regime.var, cfg.noise_gain, &mut self.rng);

        let growth = if s.incurred > 0.0 { incurred / s.incurred - 1.0 } else { 0.0 };
        if self.growth.len() == cfg.vol_window {
            self.growth.pop_front();
        }
        self.growth.push_back(growth);
        self.growth_scratch.clear();
        self.growth_scratch.extend(self.growth.iter().copied());
        let volatility = volatility_proxy(&self.growth_scratch, cfg.vol_scale);

        let shortfall = (incurred - reserve).max(0.0);
        self.buffer.push(shortfall);
        let alpha = cfg.alpha_mode.alpha(volatility);
        let tail = self.buffer.cvar(alpha);

        let floor = cfg.floor.level(volatility);
        let violated = reserve < floor;
        let violation_memory = update_violation_memory(s.violation_memory, violated);

        let components = RewardComponents {
            shortfall,
            cvar: tail.cvar,
            cap_inefficiency: (reserve - incurred).abs(),
            violated,
            floor,
            alpha,
        };
        let reward = compute_reward(&components, &cfg.weights);

        let shock = shock_for_step(cfg.shock_mode, self.regime, &mut self.rng);
        let t = s.t + 1;
        self.done = t == cfg.horizon;
        self.state = EnvState { reserve, incurred, volatility, violation_memory, shock, level: s.level, t };

        Ok(StepOutcome { next_state: self.state, action, reward, components, done: self.done })
    }
}

/// Anything that chooses grid actions episode by episode: trained agents and
/// replayed static baselines alike.
pub trait ReservePolicy {
    fn name(&self) -> &str;

    /// Called after each `reset`, before the first action.
    fn begin_episode(&mut self, _start: &EpisodeStart, _horizon: usize) {}

    fn act(&mut self, state: &EnvState) -> Result<usize>;
}

/// Plays `episodes` full episodes and returns the step records, ordered by
/// episode then step.
pub fn run_episodes(
    policy: &mut dyn ReservePolicy,
    env: &mut ReservingEnv,
    episodes: usize,
) -> Result<Vec<StepRecord>> {
    run_episodes_with(policy, env, episodes, |_, _| {})
}

/// As [`run_episodes`], calling `before_reset(episode, env)` ahead of every
/// reset (for example to change the regime).
pub fn run_episodes_with(
    policy: &mut dyn ReservePolicy,
    env: &mut ReservingEnv,
    episodes: usize,
    mut before_reset: impl FnMut(usize, &mut ReservingEnv),
) -> Result<Vec<StepRecord>> {
    let mut records = Vec::with_capacity(episodes * env.horizon());
    for episode in 0..episodes {
        before_reset(episode, env);
        let mut state = env.reset();
        policy.begin_episode(&env.episode_start(), env.horizon());
        loop {
            let action = policy.act(&state)?;
            let out = env.step(action)?;
            records.push(StepRecord::new(episode, state.t, &out));
            state = out.next_state;
            if out.done {
                break;
            }
        }
    }
    Ok(records)
}

/// One row of an episode trace. State fields are post-step values; `t` is
/// the index of the decision that produced them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub episode: usize,
    pub t: usize,
    pub reserve: f64,
    pub incurred: f64,
    pub volatility: f64,
    pub capital_efficiency: f64,
    pub violation_memory: f64,
    pub shock: f64,
    pub level: u8,
    pub action: usize,
    pub reward: f64,
    pub shortfall: f64,
    pub cvar: f64,
    pub cap_inefficiency: f64,
    pub violated: bool,
}

impl StepRecord {
    pub fn new(episode: usize, step_index: usize, o: &StepOutcome) -> Self {
        let s = &o.next_state;
        Self {
            episode,
            t: step_index,
            reserve: s.reserve,
            incurred: s.incurred,
            volatility: s.volatility,
            capital_efficiency: s.capital_efficiency(),
            violation_memory: s.violation_memory,
            shock: s.shock,
            level: s.level,
            action: o.action,
            reward: o.reward,
            shortfall: o.components.shortfall,
            cvar: o.components.cvar,
            cap_inefficiency: o.components.cap_inefficiency,
            violated: o.components.violated,
        }
    }
}

pub const TRACE_HEADER: &str = "episode,t,R,L,V,K,nu,M,level,action,reward,shortfall,cvar,violated";

pub fn trace_to_csv(records: &[StepRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.episode,
            r.t,
            r.reserve,
            r.incurred,
            r.volatility,
            r.capital_efficiency,
            r.violation_memory,
            r.shock,
            r.level,
            ACTION_GRID[r.action],
            r.reward,
            r.shortfall,
            r.cvar,
            u8::from(r.violated)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triangles::{parse_triangle_csv, TriangleCell};

    fn flat_triangle(l0: f64, depth: usize) -> LossTriangle {
        let cells = (1..=depth as u32)
            .map(|lag| TriangleCell {
                accident_year: 2000,
                dev_lag: lag,
                cum_incurred: l0,
                cum_paid: 0.0,
                earned_premium: 1.0,
            })
            .collect();
        LossTriangle::new(cells).unwrap()
    }

    fn deterministic(horizon: usize) -> EnvConfig {
        EnvConfig {
            noise_gain: 0.0,
            shock_mode: ShockMode::FixedShock { m: 1.0 },
            ..EnvConfig::new(horizon)
        }
    }

    #[test]
    fn grid_is_symmetric_and_increasing() {
        for i in 0..N_ACTIONS {
            assert_eq!(ACTION_GRID[i], -ACTION_GRID[N_ACTIONS - 1 - i]);
        }
        assert!(ACTION_GRID.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn action_application() {
        assert!((apply_action(0.5, 0.10).unwrap() - 0.55).abs() < 1e-15);
        assert_eq!(apply_action(0.5, 0.0).unwrap(), 0.5);
        assert_eq!(apply_action(0.0, -0.10).unwrap(), 0.0);
        assert!(matches!(apply_action(0.5, 0.05), Err(Error::ActionOutOfGrid(_))));
    }

    #[test]
    fn development_step() {
        assert!((develop_with_noise(0.4, 1.5, 1.0, 0.0) - 0.6).abs() < 1e-15);
        assert_eq!(develop_with_noise(0.4, 1.0, 7.3, 0.0), 0.4);
        assert!((develop_with_noise(0.4, 1.5, 2.0, 0.0) - 0.8).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((develop_losses(0.4, 1.5, 1.0, 0.16, 0.0, &mut rng) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn volatility_examples() {
        assert_eq!(volatility_proxy(&[0.3], 0.5), 0.0);
        assert!(volatility_proxy(&[0.1, 0.1, 0.1], 0.5) < 1e-12);
        assert!((volatility_proxy(&[0.0, 0.2], 0.2) - 0.5).abs() < 1e-12);
        assert_eq!(volatility_proxy(&[-5.0, 5.0], 0.5), 1.0);
    }

    #[test]
    fn floors() {
        assert_eq!(solvency_floor(0.0), 0.4);
        assert!((solvency_floor(1.0) - 0.6).abs() < 1e-15);
        assert!((SolvencyFloor::STRICT.level(0.5) - 0.65).abs() < 1e-15);
    }

    #[test]
    fn violation_memory() {
        assert!((update_violation_memory(0.0, true) - 0.05).abs() < 1e-15);
        assert!((update_violation_memory(0.5, false) - 0.475).abs() < 1e-15);
        let mut nu = 0.0;
        for _ in 0..3 {
            nu = update_violation_memory(nu, true);
        }
        assert!((nu - 0.142625).abs() < 1e-12);
    }

    #[test]
    fn reward_examples() {
        let w = RewardWeights::default();
        let c = |s, cv, ci, v| RewardComponents {
            shortfall: s,
            cvar: cv,
            cap_inefficiency: ci,
            violated: v,
            floor: 0.4,
            alpha: 0.9,
        };
        assert_eq!(compute_reward(&c(0.0, 0.0, 0.0, false), &w), 0.0);
        assert!((compute_reward(&c(0.1, 0.2, 0.1, true), &w) + 12.2).abs() < 1e-12);
        assert!((compute_reward(&c(0.0, 0.0, 0.3, false), &w) + 0.3).abs() < 1e-12);
    }

    #[test]
    fn reset_contract() {
        let tri = parse_triangle_csv(
            "accident_year,dev_lag,cum_incurred,cum_paid,earned_premium\n1,1,0.5,0,1\n1,2,0.6,0,1\n2,1,0.7,0,1\n"
                .as_bytes(),
        )
        .unwrap();
        let f = DevelopmentFactors::new(vec![1.2]).unwrap();
        let make = || ReservingEnv::new(&tri, &f, EnvConfig::new(2), &RegimeTable::default()).unwrap();
        let (mut a, mut b) = (make(), make());
        let s = a.reset();
        assert_eq!((s.violation_memory, s.volatility, s.capital_efficiency(), s.t), (0.0, 0.0, 1.0, 0));
        assert_eq!(s.reserve, s.incurred);
        assert_eq!(s, b.reset());

        let too_deep = ReservingEnv::new(&tri, &f, EnvConfig::new(3), &RegimeTable::default());
        assert!(matches!(too_deep, Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn equilibrium_step_pays_only_tail_risk() {
        let tri = flat_triangle(0.7, 4);
        let f = DevelopmentFactors::new(vec![1.0; 3]).unwrap();
        let mut env = ReservingEnv::new(&tri, &f, deterministic(4), &RegimeTable::default()).unwrap();
        env.reset();
        let out = env.step(HOLD_ACTION).unwrap();
        assert_eq!(out.components.shortfall, 0.0);
        assert_eq!(out.components.cap_inefficiency, 0.0);
        assert_eq!(out.next_state.capital_efficiency(), 1.0);
        assert_eq!(out.reward, -8.0 * out.components.cvar);
    }

    #[test]
    fn low_reserve_is_a_violation() {
        let tri = flat_triangle(0.3, 3);
        let f = DevelopmentFactors::new(vec![1.0; 2]).unwrap();
        let mut env = ReservingEnv::new(&tri, &f, deterministic(3), &RegimeTable::default()).unwrap();
        env.reset();
        let out = env.step(HOLD_ACTION).unwrap();
        assert!(out.components.violated);
        assert_eq!(out.components.floor, 0.4);
        assert!(out.reward <= -10.0);
        assert!((out.reward + 10.0 + 8.0 * out.components.cvar).abs() < 1e-12);
    }

    #[test]
    fn horizon_and_finished_episode() {
        let tri = flat_triangle(0.7, 3);
        let f = DevelopmentFactors::new(vec![1.1, 1.05]).unwrap();
        let mut env = ReservingEnv::new(&tri, &f, deterministic(3), &RegimeTable::default()).unwrap();
        assert!(matches!(env.step(0), Err(Error::EpisodeFinished)));
        env.reset();
        assert!(!env.step(6).unwrap().done);
        assert!(!env.step(6).unwrap().done);
        assert!(env.step(6).unwrap().done);
        assert!(matches!(env.step(0), Err(Error::EpisodeFinished)));
        env.reset();
        assert!(matches!(env.step(7), Err(Error::ActionOutOfGrid(_))));
    }

    #[test]
    fn trace_csv_columns() {
        let tri = flat_triangle(0.7, 2);
        let f = DevelopmentFactors::new(vec![1.0]).unwrap();
        let mut env = ReservingEnv::new(&tri, &f, deterministic(2), &RegimeTable::default()).unwrap();
        env.reset();
        let out = env.step(HOLD_ACTION).unwrap();
        let csv = trace_to_csv(&[StepRecord::new(0, 0, &out)]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), TRACE_HEADER);
        assert_eq!(lines.next().unwrap().split(',').count(), 14);
    }
}
