//! Run configuration: a sectioned TOML document. Unknown keys are rejected
//! and every omitted key falls back to the built-in defaults, which
//! `--print-config` shows in full.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::PpoConfig;
use crate::env::{AlphaMode, EnvConfig, RewardWeights, SolvencyFloor};
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, RAR_EPS};
use crate::manifest::content_hash;
use crate::regimes::{CurriculumSchedule, RegimeSpec, RegimeTable, REGIME_TABLE, STRESS_SHOCKS};
use crate::risk::{DEFAULT_BUFFER_CAPACITY, DEFAULT_WARMUP_MIN};
use crate::triangles::SplitSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    /// Steps per episode; defaults to the triangle's number of lags.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub vol_window: usize,
    pub vol_scale: f64,
    pub noise_gain: f64,
    pub buffer_capacity: usize,
    pub warmup_min: usize,
    /// Fixed CVaR confidence level. Absent means volatility-adaptive.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub floor: SolvencyFloor,
    pub weights: RewardWeights,
}

impl Default for EnvSection {
    fn default() -> Self {
        let base = EnvConfig::new(2);
        Self {
            horizon: None,
            vol_window: base.vol_window,
            vol_scale: base.vol_scale,
            noise_gain: base.noise_gain,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            warmup_min: DEFAULT_WARMUP_MIN,
            alpha: None,
            floor: SolvencyFloor::DEFAULT,
            weights: RewardWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub episodes: usize,
    pub levels: Vec<u8>,
    pub shocks: Vec<f64>,
    pub rar_eps: f64,
    pub alphas: Vec<f64>,
    pub floors: Vec<SolvencyFloor>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            episodes: 100,
            levels: vec![0, 1, 2, 3],
            shocks: STRESS_SHOCKS.to_vec(),
            rar_eps: RAR_EPS,
            alphas: vec![0.90, 0.925, 0.95],
            floors: vec![SolvencyFloor::DEFAULT, SolvencyFloor::STRICT],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselinesSection {
    pub bootstrap_sims: usize,
    pub bootstrap_seed: u64,
}

impl Default for BaselinesSection {
    fn default() -> Self {
        Self { bootstrap_sims: 1000, bootstrap_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Triangle CSV, relative to the config file's directory.
    pub triangle: PathBuf,
    pub lob: String,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub workers: usize,
    /// Training accident years; defaults to all but the last `a_test`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_train: Option<usize>,
    pub a_test: usize,
    pub env: EnvSection,
    pub regimes: Vec<RegimeSpec>,
    pub ppo: PpoConfig,
    pub curriculum: CurriculumSchedule,
    pub eval: EvalSection,
    pub baselines: BaselinesSection,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            triangle: PathBuf::from("data/workers_comp.csv"),
            lob: "workers_comp".into(),
            out_dir: PathBuf::from("out"),
            seeds: vec![0, 1, 2, 3, 4],
            workers: 1,
            a_train: None,
            a_test: 2,
            env: EnvSection::default(),
            regimes: REGIME_TABLE.to_vec(),
            ppo: PpoConfig::default(),
            curriculum: CurriculumSchedule::default(),
            eval: EvalSection::default(),
            baselines: BaselinesSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative paths inside it resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let cfg = Self::from_toml_str(&text, &base).map_err(|e| e.context(path.display().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn triangle_path(&self) -> PathBuf {
        self.resolve(&self.triangle)
    }

    pub fn out_path(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.lob.is_empty() || self.lob.contains(',') {
            return Err(Error::Config("lob must be a non-empty label without commas".into()));
        }
        self.ppo.validate()?;
        self.curriculum.validate()?;
        self.regime_table()?;
        self.eval_config().validate()?;
        if let Some(a) = self.env.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidAlpha(a));
            }
        }
        if self.baselines.bootstrap_sims == 0 {
            return Err(Error::Config("baselines.bootstrap_sims must be positive".into()));
        }
        let tri = self.triangle_path();
        if !tri.is_file() {
            return Err(Error::io(tri, std::io::Error::new(std::io::ErrorKind::NotFound, "triangle file not found")));
        }
        Ok(())
    }

    pub fn split_for(&self, n_accident_years: usize) -> SplitSpec {
        SplitSpec {
            a_train: self.a_train.unwrap_or(n_accident_years.saturating_sub(self.a_test)),
            a_test: self.a_test,
        }
    }

    pub fn regime_table(&self) -> Result<RegimeTable> {
        RegimeTable::new(self.regimes.clone())
    }

    /// Environment settings for a triangle with `n_dev_lags` lags.
    pub fn env_config(&self, n_dev_lags: usize) -> EnvConfig {
        let e = &self.env;
        EnvConfig {
            weights: e.weights,
            vol_window: e.vol_window,
            vol_scale: e.vol_scale,
            noise_gain: e.noise_gain,
            floor: e.floor,
            alpha_mode: e.alpha.map_or(AlphaMode::Adaptive, AlphaMode::Fixed),
            buffer_capacity: e.buffer_capacity,
            warmup_min: e.warmup_min,
            ..EnvConfig::new(e.horizon.unwrap_or(n_dev_lags))
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        let e = &self.eval;
        EvalConfig {
            episodes: e.episodes,
            seeds: self.seeds.clone(),
            levels: e.levels.clone(),
            shocks: e.shocks.clone(),
            rar_eps: e.rar_eps,
            alphas: e.alphas.clone(),
            floors: e.floors.clone(),
            workers: self.workers,
            lob: self.lob.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Content hash of everything that can change results. The output
    /// directory and worker count are left out.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(&self.canonical()).expect("config serializes");
        content_hash(json.as_bytes())
    }

    /// The fingerprinted view of the config, as embedded in reports.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.canonical()).expect("config serializes")
    }

    fn canonical(&self) -> Self {
        Self { out_dir: PathBuf::new(), workers: 1, ..self.clone() }
    }
}
