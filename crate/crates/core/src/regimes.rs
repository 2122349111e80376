//! Macroeconomic regime curriculum and shock generation.
//!
//! The second regime parameter is a variance everywhere in this crate; the
//! Gaussian sampler receives its square root.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shocks are floored here so that a far Gaussian tail cannot reverse the
/// sign of development.
pub const MIN_SHOCK: f64 = 0.01;

/// Stress grid used by fixed-shock testing.
pub const STRESS_SHOCKS: [f64; 4] = [0.8, 1.0, 1.5, 2.0];

/// Development-noise variance used in fixed-shock mode (calm regime).
pub const FIXED_SHOCK_NOISE_VAR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    pub level: u8,
    pub mu: f64,
    pub var: f64,
}

pub const REGIME_TABLE: [RegimeSpec; 4] = [
    RegimeSpec { level: 0, mu: 1.0, var: 0.01 },
    RegimeSpec { level: 1, mu: 1.2, var: 0.04 },
    RegimeSpec { level: 2, mu: 1.5, var: 0.09 },
    RegimeSpec { level: 3, mu: 1.8, var: 0.16 },
];

pub const REGIME_NAMES: [&str; 4] = ["calm", "moderate", "volatile", "recession"];

/// Looks up the built-in curriculum table.
pub fn regime_params(level: u8) -> Result<RegimeSpec> {
    REGIME_TABLE.get(level as usize).copied().ok_or(Error::UnknownLevel(level))
}

/// Regime table, overridable from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTable {
    specs: Vec<RegimeSpec>,
}

impl Default for RegimeTable {
    fn default() -> Self {
        Self { specs: REGIME_TABLE.to_vec() }
    }
}

impl RegimeTable {
    pub fn new(specs: Vec<RegimeSpec>) -> Result<Self> {
        if specs.len() != REGIME_TABLE.len() {
            return Err(Error::Config(format!("regime table needs {} levels", REGIME_TABLE.len())));
        }
        for (i, s) in specs.iter().enumerate() {
            if s.level as usize != i {
                return Err(Error::Config(format!("regime entry {i} has level {}", s.level)));
            }
            if !(s.var > 0.0 && s.var.is_finite() && s.mu.is_finite()) {
                return Err(Error::Config(format!("regime {i} needs finite mu and var > 0")));
            }
        }
        Ok(Self { specs })
    }

    pub fn get(&self, level: u8) -> Result<RegimeSpec> {
        self.specs.get(level as usize).copied().ok_or(Error::UnknownLevel(level))
    }

    pub fn specs(&self) -> &[RegimeSpec] {
        &self.specs
    }

    /// Level whose mean is closest to `shock`; ties go to the calmer level.
    pub fn nearest_level(&self, shock: f64) -> u8 {
        let mut best = self.specs[0];
        for s in &self.specs[1..] {
            if (s.mu - shock).abs() < (best.mu - shock).abs() {
                best = *s;
            }
        }
        best.level
    }
}

/// Linear interpolation of `(mu, var)`; the endpoints are returned exactly.
pub fn interpolate(from: RegimeSpec, to: RegimeSpec, progress: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&progress) {
        return Err(Error::InvalidProgress(progress));
    }
    if progress == 0.0 {
        return Ok((from.mu, from.var));
    }
    if progress == 1.0 {
        return Ok((to.mu, to.var));
    }
    let lerp = |a: f64, b: f64| (1.0 - progress) * a + progress * b;
    Ok((lerp(from.mu, to.mu), lerp(from.var, to.var)))
}

/// One draw from `Normal(mu, var)`.
pub fn sample_shock<R: Rng + ?Sized>(mu: f64, var: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mu + var.sqrt() * z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShockMode {
    /// Shocks drawn each step from the active (possibly ramped) regime.
    Stochastic { level: u8 },
    /// Shock held at `m` for the whole episode.
    FixedShock { m: f64 },
}

/// Regime parameters in force for the current episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveRegime {
    pub level: u8,
    pub mu: f64,
    pub var: f64,
}

impl From<RegimeSpec> for ActiveRegime {
    fn from(s: RegimeSpec) -> Self {
        Self { level: s.level, mu: s.mu, var: s.var }
    }
}

pub fn shock_for_step<R: Rng + ?Sized>(mode: ShockMode, regime: ActiveRegime, rng: &mut R) -> f64 {
    match mode {
        ShockMode::FixedShock { m } => m,
        ShockMode::Stochastic { .. } => {
            let m = sample_shock(regime.mu, regime.var, rng);
            if m < MIN_SHOCK {
                log::debug!("shock {m:.4} clamped to {MIN_SHOCK}");
                MIN_SHOCK
            } else {
                m
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSchedule {
    pub ramp_episodes: usize,
    pub episodes_per_level: usize,
    /// Levels visited in order; `[0, 1]` gives the cold-regime schedule.
    pub levels: Vec<u8>,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self { ramp_episodes: 50, episodes_per_level: 200, levels: vec![0, 1, 2, 3] }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.ramp_episodes < 1 || self.ramp_episodes > self.episodes_per_level {
            return Err(Error::Config(format!(
                "ramp_episodes must be in 1..={} (got {})",
                self.episodes_per_level, self.ramp_episodes
            )));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("curriculum needs at least one level".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("curriculum levels must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Parameters for episode `episode` (0-based) of the `stage`-th level.
    /// The first `ramp_episodes` of a stage move linearly away from the
    /// previous stage's regime; the first stage starts at its own regime.
    pub fn regime_for(&self, table: &RegimeTable, stage: usize, episode: usize) -> Result<ActiveRegime> {
        let to = table.get(self.levels[stage])?;
        let from = if stage == 0 { to } else { table.get(self.levels[stage - 1])? };
        let progress = (episode as f64 / self.ramp_episodes as f64).min(1.0);
        let (mu, var) = interpolate(from, to, progress)?;
        Ok(ActiveRegime { level: to.level, mu, var })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn table_rows() {
        assert_eq!(regime_params(0).unwrap(), RegimeSpec { level: 0, mu: 1.0, var: 0.01 });
        assert_eq!(regime_params(3).unwrap(), RegimeSpec { level: 3, mu: 1.8, var: 0.16 });
        assert!(matches!(regime_params(5), Err(Error::UnknownLevel(5))));
        for w in REGIME_TABLE.windows(2) {
            assert!(w[0].mu < w[1].mu && w[0].var < w[1].var);
        }
    }

    #[test]
    fn interpolation() {
        let (a, b) = (REGIME_TABLE[0], REGIME_TABLE[1]);
        assert_eq!(interpolate(a, b, 0.0).unwrap(), (1.0, 0.01));
        assert_eq!(interpolate(a, b, 1.0).unwrap(), (1.2, 0.04));
        let (mu, var) = interpolate(a, b, 0.5).unwrap();
        assert!((mu - 1.1).abs() < 1e-12 && (var - 0.025).abs() < 1e-12);
        assert!(matches!(interpolate(a, b, 1.5), Err(Error::InvalidProgress(_))));
        assert!(matches!(interpolate(a, b, -0.1), Err(Error::InvalidProgress(_))));
    }

    #[test]
    fn tiny_variance_is_nearly_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            assert!((sample_shock(1.5, 1e-12, &mut rng) - 1.5).abs() < 1e-4);
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..32).map(|_| sample_shock(1.0, 0.01, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn fixed_shock_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let calm = ActiveRegime::from(REGIME_TABLE[0]);
        for m in [1.0, 2.0] {
            for _ in 0..10 {
                assert_eq!(shock_for_step(ShockMode::FixedShock { m }, calm, &mut rng), m);
            }
        }
    }

    #[test]
    fn stochastic_level_two_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let volatile = ActiveRegime::from(REGIME_TABLE[2]);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| shock_for_step(ShockMode::Stochastic { level: 2 }, volatile, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn ramp_moves_from_previous_level() {
        let sched = CurriculumSchedule::default();
        let table = RegimeTable::default();
        let first = sched.regime_for(&table, 0, 0).unwrap();
        assert_eq!((first.mu, first.var), (1.0, 0.01));
        let start = sched.regime_for(&table, 1, 0).unwrap();
        assert_eq!((start.level, start.mu, start.var), (1, 1.0, 0.01));
        let mid = sched.regime_for(&table, 1, 25).unwrap();
        assert!((mid.mu - 1.1).abs() < 1e-12);
        let done = sched.regime_for(&table, 1, 50).unwrap();
        assert_eq!((done.mu, done.var), (1.2, 0.04));
        assert_eq!(sched.regime_for(&table, 1, 199).unwrap().mu, 1.2);
    }

    #[test]
    fn schedule_validation() {
        let mut s = CurriculumSchedule::default();
        assert!(s.validate().is_ok());
        s.ramp_episodes = 0;
        assert!(s.validate().is_err());
        s.ramp_episodes = 300;
        assert!(s.validate().is_err());
        let cold = CurriculumSchedule { levels: vec![0, 1], ..Default::default() };
        assert!(cold.validate().is_ok());
    }

    #[test]
    fn nearest_level_for_stress_grid() {
        let t = RegimeTable::default();
        let levels: Vec<u8> = STRESS_SHOCKS.iter().map(|&m| t.nearest_level(m)).collect();
        assert_eq!(levels, vec![0, 0, 2, 3]);
    }
}
