//! Evaluation metrics and experiment drivers.
//!
//! Every model evaluated under a condition and seed gets a fresh environment
//! seeded identically, so shocks, noise and starting years match across
//! models. Metrics are computed per seed over pooled episodes, then
//! summarized across seeds.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{derive_seed, observe, train_curriculum, MlpCache, PpoConfig, TrainedPolicy, TrainingRun};
use crate::baselines::StaticPathPolicy;
use crate::env::{
    run_episodes_with, AlphaMode, EnvConfig, EnvState, ReservePolicy, ReservingEnv, SolvencyFloor, StepRecord,
};
use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::regimes::{CurriculumSchedule, RegimeTable, ShockMode, STRESS_SHOCKS};
use crate::risk::TailEstimate;
use crate::triangles::{DevelopmentFactors, LossTriangle};

pub const RAR_EPS: f64 = 0.01;
pub const CVAR_METRIC_LEVEL: f64 = 0.95;
pub const MIN_TAIL_SAMPLES: usize = 20;

/// Mean of `R / L` over steps with `L >= eps`.
pub fn metric_rar(records: &[StepRecord], eps: f64) -> Result<f64> {
    let (sum, n) = records
        .iter()
        .filter(|r| r.incurred >= eps)
        .fold((0.0, 0usize), |(s, n), r| (s + r.reserve / r.incurred, n + 1));
    if n == 0 {
        return Err(Error::NoEligibleSteps);
    }
    Ok(sum / n as f64)
}

/// Tail mean of pooled shortfalls at or above the nearest-rank 95% VaR.
pub fn metric_cvar95(records: &[StepRecord]) -> Result<f64> {
    if records.len() < MIN_TAIL_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_TAIL_SAMPLES, got: records.len() });
    }
    let shortfalls: Vec<f64> = records.iter().map(|r| r.shortfall).collect();
    Ok(TailEstimate::from_samples(&shortfalls, CVAR_METRIC_LEVEL)?.cvar)
}

/// `1 - mean |R - L|`; may go negative when held-out losses exceed 1.
pub fn metric_ces(records: &[StepRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::NoEligibleSteps);
    }
    Ok(1.0 - records.iter().map(|r| r.cap_inefficiency).sum::<f64>() / records.len() as f64)
}

/// Share of steps whose recorded violation flag is set.
pub fn metric_rvr(records: &[StepRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::NoEligibleSteps);
    }
    Ok(records.iter().filter(|r| r.violated).count() as f64 / records.len() as f64)
}

/// Share of steps below `floor`, whatever floor the episode trained under.
pub fn metric_rvr_against(records: &[StepRecord], floor: SolvencyFloor) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::NoEligibleSteps);
    }
    let breaches = records.iter().filter(|r| floor.breached(r.reserve, r.volatility)).count();
    Ok(breaches as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub rar: f64,
    pub cvar95: f64,
    pub ces: f64,
    pub rvr: f64,
}

impl SeedMetrics {
    /// `rvr_floor` replaces the recorded violation flags when given.
    pub fn from_records(seed: u64, records: &[StepRecord], rar_eps: f64, rvr_floor: Option<SolvencyFloor>) -> Result<Self> {
        Ok(Self {
            seed,
            rar: metric_rar(records, rar_eps)?,
            cvar95: metric_cvar95(records)?,
            ces: metric_ces(records)?,
            rvr: match rvr_floor {
                Some(f) => metric_rvr_against(records, f)?,
                None => metric_rvr(records)?,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub lob: String,
    pub condition: String,
    pub rar: f64,
    pub cvar95: f64,
    pub ces: f64,
    pub rvr: f64,
    /// Episodes over all seeds.
    pub n_episodes: usize,
    pub n_seeds: usize,
    pub rar_sd: f64,
    pub cvar95_sd: f64,
    pub ces_sd: f64,
    pub rvr_sd: f64,
    pub per_seed: Vec<SeedMetrics>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl MetricsRow {
    pub fn from_seeds(
        model: impl Into<String>,
        lob: impl Into<String>,
        condition: impl Into<String>,
        per_seed: Vec<SeedMetrics>,
        episodes_per_seed: usize,
    ) -> Self {
        let col = |f: fn(&SeedMetrics) -> f64| mean_sd(&per_seed.iter().map(f).collect::<Vec<_>>());
        let (rar, rar_sd) = col(|m| m.rar);
        let (cvar95, cvar95_sd) = col(|m| m.cvar95);
        let (ces, ces_sd) = col(|m| m.ces);
        let (rvr, rvr_sd) = col(|m| m.rvr);
        Self {
            model: model.into(),
            lob: lob.into(),
            condition: condition.into(),
            rar,
            cvar95,
            ces,
            rvr,
            n_episodes: episodes_per_seed * per_seed.len(),
            n_seeds: per_seed.len(),
            rar_sd,
            cvar95_sd,
            ces_sd,
            rvr_sd,
            per_seed,
        }
    }

    /// Median across seeds of one metric.
    pub fn median_of(&self, f: fn(&SeedMetrics) -> f64) -> f64 {
        median(&self.per_seed.iter().map(f).collect::<Vec<_>>())
    }
}

/// Evaluation condition: a stochastic regime level, a fixed shock, or all
/// levels in rotation (one level per episode, cycling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    Level(u8),
    Shock(f64),
    MixedLevels,
}

impl Condition {
    pub fn label(&self) -> String {
        match self {
            Condition::Level(l) => format!("level{l}"),
            Condition::Shock(m) => format!("shock{m}"),
            Condition::MixedLevels => "mixed".into(),
        }
    }

    fn stream(&self) -> u64 {
        match *self {
            Condition::Level(l) => 100 + u64::from(l),
            Condition::Shock(m) => 200 + (m * 1000.0).round() as u64,
            Condition::MixedLevels => 10_000,
        }
    }

    fn shock_mode(&self) -> ShockMode {
        match *self {
            Condition::Level(level) => ShockMode::Stochastic { level },
            Condition::Shock(m) => ShockMode::FixedShock { m },
            Condition::MixedLevels => ShockMode::Stochastic { level: 0 },
        }
    }
}

/// Everything needed to build environments for one data split.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub triangle: LossTriangle,
    pub factors: DevelopmentFactors,
    pub env: EnvConfig,
    pub regimes: RegimeTable,
}

impl Scenario {
    pub fn build_env(&self, seed: u64, shock_mode: ShockMode) -> Result<ReservingEnv> {
        let config = EnvConfig { seed, shock_mode, ..self.env.clone() };
        ReservingEnv::new(&self.triangle, &self.factors, config, &self.regimes)
    }

    /// Training environments in the scenario's configured shock mode.
    pub fn factory(&self) -> impl Fn(u64) -> Result<ReservingEnv> + Sync + '_ {
        move |seed| self.build_env(seed, self.env.shock_mode)
    }

    pub fn with_env(&self, f: impl FnOnce(&mut EnvConfig)) -> Self {
        let mut s = self.clone();
        f(&mut s.env);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub levels: Vec<u8>,
    pub shocks: Vec<f64>,
    pub rar_eps: f64,
    pub alphas: Vec<f64>,
    pub floors: Vec<SolvencyFloor>,
    pub workers: usize,
    pub lob: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            seeds: vec![0, 1, 2, 3, 4],
            levels: vec![0, 1, 2, 3],
            shocks: STRESS_SHOCKS.to_vec(),
            rar_eps: RAR_EPS,
            alphas: vec![0.90, 0.925, 0.95],
            floors: vec![SolvencyFloor::DEFAULT, SolvencyFloor::STRICT],
            workers: 1,
            lob: "workers_comp".into(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.seeds.is_empty() {
            return Err(Error::Config("eval needs at least one episode and one seed".into()));
        }
        if !(self.rar_eps > 0.0) {
            return Err(Error::Config("rar_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Deterministic greedy play of a trained policy.
pub struct GreedyAgent<'a> {
    name: String,
    policy: &'a TrainedPolicy,
    cache: MlpCache,
}

impl<'a> GreedyAgent<'a> {
    pub fn new(name: impl Into<String>, policy: &'a TrainedPolicy) -> Self {
        Self { name: name.into(), policy, cache: MlpCache::default() }
    }
}

impl ReservePolicy for GreedyAgent<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, state: &EnvState) -> Result<usize> {
        self.policy.greedy(&observe(state), &mut self.cache)
    }
}

/// A model under evaluation. Agents carry one policy per evaluation seed.
#[derive(Clone, Copy)]
pub enum Model<'a> {
    Agent { name: &'a str, policies: &'a [TrainedPolicy] },
    Static(&'a StaticPathPolicy),
}

impl<'a> Model<'a> {
    pub fn name(&self) -> &str {
        match self {
            Model::Agent { name, .. } => name,
            Model::Static(p) => p.name(),
        }
    }

    fn for_seed(&self, k: usize) -> Box<dyn ReservePolicy + 'a> {
        match *self {
            Model::Agent { name, policies } => Box::new(GreedyAgent::new(name, &policies[k])),
            Model::Static(p) => Box::new(p.clone()),
        }
    }
}

pub const EVAL_STREAM: u64 = 3;

/// Step records of one model, seed and condition.
pub fn condition_traces(
    model: &Model<'_>,
    seed_index: usize,
    seed: u64,
    scenario: &Scenario,
    condition: Condition,
    episodes: usize,
) -> Result<Vec<StepRecord>> {
    let env_seed = derive_seed(derive_seed(seed, EVAL_STREAM), condition.stream());
    let mut env = scenario.build_env(env_seed, condition.shock_mode())?;
    let mut policy = model.for_seed(seed_index);
    let levels: Vec<u8> = scenario.regimes.specs().iter().map(|s| s.level).collect();
    let regimes = &scenario.regimes;
    run_episodes_with(policy.as_mut(), &mut env, episodes, |episode, env| {
        if condition == Condition::MixedLevels {
            let level = levels[episode % levels.len()];
            env.set_regime(regimes.get(level).expect("level from table").into());
        }
    })
}

/// One row per (condition, model), conditions outermost.
pub fn evaluate_models(
    models: &[Model<'_>],
    scenario: &Scenario,
    conditions: &[Condition],
    cfg: &EvalConfig,
    rvr_floor: Option<SolvencyFloor>,
) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    for m in models {
        if let Model::Agent { policies, .. } = m {
            if policies.len() != cfg.seeds.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} policies for {} evaluation seeds",
                    policies.len(),
                    cfg.seeds.len()
                )));
            }
        }
    }
    let indexed: Vec<(usize, u64)> = cfg.seeds.iter().copied().enumerate().collect();
    let mut rows = Vec::new();
    for &condition in conditions {
        for model in models {
            let per_seed = par_map(&indexed, cfg.workers, |&(k, seed)| {
                let records = condition_traces(model, k, seed, scenario, condition, cfg.episodes)?;
                SeedMetrics::from_records(seed, &records, cfg.rar_eps, rvr_floor)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            log::info!("evaluated {} under {}", model.name(), condition.label());
            rows.push(MetricsRow::from_seeds(model.name(), &cfg.lob, condition.label(), per_seed, cfg.episodes));
        }
    }
    Ok(rows)
}

/// Regime-stratified evaluation over `cfg.levels`.
pub fn evaluate_stochastic(models: &[Model<'_>], scenario: &Scenario, cfg: &EvalConfig) -> Result<Vec<MetricsRow>> {
    let conditions: Vec<Condition> = cfg.levels.iter().map(|&l| Condition::Level(l)).collect();
    evaluate_models(models, scenario, &conditions, cfg, None)
}

/// Fixed-shock evaluation over `cfg.shocks`.
pub fn stress_test(models: &[Model<'_>], scenario: &Scenario, cfg: &EvalConfig) -> Result<Vec<MetricsRow>> {
    let conditions: Vec<Condition> = cfg.shocks.iter().map(|&m| Condition::Shock(m)).collect();
    evaluate_models(models, scenario, &conditions, cfg, None)
}

pub struct ColdRegimeReport {
    pub runs: Vec<TrainingRun>,
    pub rows: Vec<MetricsRow>,
}

/// Trains on levels 0 and 1 only, then evaluates the agent and the baselines
/// at the most severe level.
#[allow(clippy::too_many_arguments)]
pub fn cold_regime_test(
    train: &Scenario,
    test: &Scenario,
    ppo: &PpoConfig,
    schedule: &CurriculumSchedule,
    baselines: &[StaticPathPolicy],
    cfg: &EvalConfig,
    config_fingerprint: &str,
) -> Result<ColdRegimeReport> {
    let cold = CurriculumSchedule { levels: vec![0, 1], ..schedule.clone() };
    let runs = train_curriculum(&train.factory(), ppo, &cold, &train.regimes, &cfg.seeds, cfg.workers, config_fingerprint)?;
    let policies: Vec<TrainedPolicy> = runs.iter().map(|r| r.policy.clone()).collect();
    let mut models = vec![Model::Agent { name: "rl-cvar", policies: &policies }];
    models.extend(baselines.iter().map(Model::Static));
    let worst = test.regimes.specs().last().map(|s| s.level).unwrap_or(3);
    let rows = evaluate_models(&models, test, &[Condition::Level(worst)], cfg, None)?;
    Ok(ColdRegimeReport { runs, rows })
}

pub fn sensitivity_label(alpha: f64, floor: SolvencyFloor) -> String {
    format!("alpha{alpha}_floor{}", floor.label())
}

/// Trains one agent per (alpha, floor) cell with the confidence level held
/// fixed, then evaluates it over all levels in rotation. RVR is measured
/// against `reference_floor` so cells share one yardstick.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_sweep(
    train: &Scenario,
    test: &Scenario,
    ppo: &PpoConfig,
    schedule: &CurriculumSchedule,
    cfg: &EvalConfig,
    reference_floor: SolvencyFloor,
    config_fingerprint: &str,
) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for &floor in &cfg.floors {
        for &alpha in &cfg.alphas {
            let set = |e: &mut EnvConfig| {
                e.alpha_mode = AlphaMode::Fixed(alpha);
                e.floor = floor;
            };
            let (cell_train, cell_test) = (train.with_env(set), test.with_env(set));
            let runs = train_curriculum(
                &cell_train.factory(),
                ppo,
                schedule,
                &cell_train.regimes,
                &cfg.seeds,
                cfg.workers,
                config_fingerprint,
            )?;
            let policies: Vec<TrainedPolicy> = runs.into_iter().map(|r| r.policy).collect();
            let model = Model::Agent { name: "rl-cvar", policies: &policies };
            let mut cell = evaluate_models(&[model], &cell_test, &[Condition::MixedLevels], cfg, Some(reference_floor))?;
            let mut row = cell.remove(0);
            row.condition = sensitivity_label(alpha, floor);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// True when `values` moves in the stated direction except for at most
/// `max_inversions` adjacent steps, each no larger than `tol`.
pub fn is_monotone_within(values: &[f64], non_increasing: bool, max_inversions: usize, tol: f64) -> bool {
    let mut inversions = 0;
    for w in values.windows(2) {
        let step = if non_increasing { w[1] - w[0] } else { w[0] - w[1] };
        if step > 0.0 {
            if step > tol {
                return false;
            }
            inversions += 1;
        }
    }
    inversions <= max_inversions
}

pub const REPORT_HEADER: &str =
    "model,lob,condition,rar,cvar95,ces,rvr,n_episodes,n_seeds,rar_sd,cvar95_sd,ces_sd,rvr_sd";

pub fn report_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.lob,
            r.condition,
            r.rar,
            r.cvar95,
            r.ces,
            r.rvr,
            r.n_episodes,
            r.n_seeds,
            r.rar_sd,
            r.cvar95_sd,
            r.ces_sd,
            r.rvr_sd
        ));
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_fingerprint: String,
    pub seeds: Vec<u64>,
    /// Input name to content hash.
    pub inputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    config_fingerprint: &'a str,
    seeds: &'a [u64],
    inputs: &'a BTreeMap<String, String>,
    csv_hash: String,
    config: &'a serde_json::Value,
    rows: &'a [MetricsRow],
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn emit_report(rows: &[MetricsRow], dir: &Path, stem: &str, meta: &ReportMeta) -> Result<(PathBuf, PathBuf)> {
    if rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = report_csv(rows);
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, &csv).map_err(|e| Error::io(&csv_path, e))?;
    let doc = ReportDoc {
        config_fingerprint: &meta.config_fingerprint,
        seeds: &meta.seeds,
        inputs: &meta.inputs,
        csv_hash: crate::manifest::content_hash(csv.as_bytes()),
        config: &meta.config,
        rows,
    };
    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&doc).expect("report serializes");
    fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(reserve: f64, incurred: f64, volatility: f64, violated: bool) -> StepRecord {
        StepRecord {
            episode: 0,
            t: 0,
            reserve,
            incurred,
            volatility,
            capital_efficiency: 1.0 - (reserve - incurred).abs(),
            violation_memory: 0.0,
            shock: 1.0,
            level: 0,
            action: 3,
            reward: 0.0,
            shortfall: (incurred - reserve).max(0.0),
            cvar: 0.0,
            cap_inefficiency: (reserve - incurred).abs(),
            violated,
        }
    }

    #[test]
    fn rar_examples() {
        assert_eq!(metric_rar(&[rec(0.5, 0.5, 0.0, false)], RAR_EPS).unwrap(), 1.0);
        assert_eq!(metric_rar(&[rec(0.25, 0.5, 0.0, false), rec(0.4, 0.8, 0.0, false)], RAR_EPS).unwrap(), 0.5);
        assert_eq!(metric_rar(&[rec(1.0, 0.0, 0.0, false), rec(1.0, 1.0, 0.0, false)], 0.01).unwrap(), 1.0);
        assert!(matches!(metric_rar(&[rec(1.0, 0.0, 0.0, false)], 0.01), Err(Error::NoEligibleSteps)));
    }

    #[test]
    fn cvar_examples() {
        let hundred: Vec<StepRecord> = (1..=100).map(|i| rec(0.0, f64::from(i), 0.0, false)).collect();
        assert_eq!(metric_cvar95(&hundred).unwrap(), 97.5);
        let calm: Vec<StepRecord> = (0..30).map(|_| rec(1.0, 0.5, 0.0, false)).collect();
        assert_eq!(metric_cvar95(&calm).unwrap(), 0.0);
        assert!(matches!(metric_cvar95(&calm[..5]), Err(Error::TooFewSamples { needed: 20, got: 5 })));
    }

    #[test]
    fn ces_and_rvr_examples() {
        let gap: Vec<StepRecord> = (0..10).map(|_| rec(0.62, 0.5, 0.0, false)).collect();
        assert!((metric_ces(&gap).unwrap() - 0.88).abs() < 1e-12);
        assert!((metric_ces(&[rec(0.0, 1.5, 0.0, false)]).unwrap() + 0.5).abs() < 1e-12);
        let mut hundred: Vec<StepRecord> = (0..100).map(|_| rec(0.5, 0.5, 0.0, false)).collect();
        assert_eq!(metric_rvr(&hundred).unwrap(), 0.0);
        hundred[7].violated = true;
        assert_eq!(metric_rvr(&hundred).unwrap(), 0.01);
        assert_eq!(metric_rvr_against(&[rec(0.45, 0.5, 0.0, false)], SolvencyFloor::STRICT).unwrap(), 1.0);
    }

    #[test]
    fn monotone_tolerance() {
        assert!(is_monotone_within(&[1.0, 0.9, 0.9, 0.5], true, 1, 0.01));
        assert!(is_monotone_within(&[1.0, 0.9, 0.905, 0.5], true, 1, 0.01));
        assert!(!is_monotone_within(&[1.0, 0.9, 0.95, 0.5], true, 1, 0.01));
        assert!(!is_monotone_within(&[1.0, 1.005, 0.9, 0.905], true, 1, 0.01));
        assert!(is_monotone_within(&[0.0, 0.0, 0.01, 0.2], false, 1, 0.01));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn empty_report_rejected() {
        let dir = std::env::temp_dir();
        assert!(matches!(emit_report(&[], &dir, "x", &ReportMeta::default()), Err(Error::EmptyReport)));
    }
}
