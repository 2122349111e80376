//! Pipeline commands behind the `reserve-rl` binary. Each command reads its
//! upstream artifacts from the output directory, writes its own stage
//! directory and leaves a `manifest.json` there.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{train_curriculum, training_log_csv, TrainedPolicy};
use crate::baselines::{
    aggregate_loss_ratio, bootstrap_chain_ladder, bootstrap_csv, bornhuetter_ferguson,
    chain_ladder_ultimates, estimates_to_csv, implied_loss_ratios, BootstrapResult, PathMethod, StaticPathPolicy,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    emit_report, evaluate_stochastic, report_csv, sensitivity_sweep, stress_test, MetricsRow, Model, ReportMeta,
    Scenario,
};
use crate::manifest::{file_hash, Manifest};
use crate::triangles::{
    age_to_age_factors, normalize, parse_triangle_csv, parse_triangle_csv_with_depth, split_rolling_origin, DevelopmentFactors, LossTriangle,
    NormalizationParams,
};

pub const INGEST_DIR: &str = "ingest";
pub const TRAIN_DIR: &str = "train";
pub const EVAL_DIR: &str = "eval";
pub const REPORTS_DIR: &str = "reports";

pub const AGENT_NAME: &str = "rl-cvar";

/// Evaluation suites in report order.
pub const SUITES: [&str; 4] = ["evaluate", "stress", "baselines", "sensitivity"];

pub fn read_triangle(path: &Path) -> Result<LossTriangle> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_triangle_csv(file).map_err(|e| e.context(path.display().to_string()))
}

/// Normalized train/test split and the factors estimated on the training
/// years.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: LossTriangle,
    pub test: LossTriangle,
    pub factors: DevelopmentFactors,
    pub normalization: NormalizationParams,
    /// Artifact name to content hash.
    pub inputs: BTreeMap<String, String>,
}

impl Prepared {
    pub fn from_triangle(raw: &LossTriangle, cfg: &RunConfig) -> Result<Self> {
        let split = cfg.split_for(raw.n_accident_years());
        let (norm, normalization) = normalize(raw, split)?;
        let (train, test) = split_rolling_origin(&norm, split)?;
        let factors = age_to_age_factors(&train)?;
        Ok(Self { train, test, factors, normalization, inputs: BTreeMap::new() })
    }

    /// Reads the artifacts written by [`cmd_ingest`].
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.out_path().join(INGEST_DIR);
        let mut inputs = BTreeMap::new();
        let mut open = |name: &str| -> Result<String> {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(Error::MissingArtifact(path));
            }
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            inputs.insert(format!("{INGEST_DIR}/{name}"), file_hash(&path)?);
            Ok(text)
        };
        let train = parse_triangle_csv(open("train.csv")?.as_bytes())?;
        let test = parse_triangle_csv_with_depth(open("test.csv")?.as_bytes(), train.n_dev_lags())?;
        let factors = DevelopmentFactors::parse_csv(open("factors.csv")?.as_bytes())?;
        let norm_path = dir.join("normalization.json");
        let normalization = serde_json::from_str(&open("normalization.json")?)
            .map_err(|source| Error::Json { path: norm_path, source })?;
        Ok(Self { train, test, factors, normalization, inputs })
    }

    pub fn scenarios(&self, cfg: &RunConfig) -> Result<(Scenario, Scenario)> {
        let regimes = cfg.regime_table()?;
        let env = cfg.env_config(self.train.n_dev_lags());
        let train = Scenario { triangle: self.train.clone(), factors: self.factors.clone(), env, regimes };
        let test = Scenario { triangle: self.test.clone(), ..train.clone() };
        Ok((train, test))
    }

    /// Chain-ladder, Bornhuetter-Ferguson and bootstrap paths calibrated on
    /// the training years. The bootstrap path is left out when the training
    /// years are too few to resample.
    pub fn static_baselines(&self, cfg: &RunConfig) -> Result<(Vec<StaticPathPolicy>, Option<BootstrapResult>)> {
        let f = &self.factors;
        let elr = implied_loss_ratios(&self.train, f)?;
        let default_elr = aggregate_loss_ratio(&self.train, f)?;
        let mut policies = vec![
            StaticPathPolicy::new("clm", PathMethod::ChainLadder(f.clone())),
            StaticPathPolicy::new("bfm", PathMethod::BornhuetterFerguson { factors: f.clone(), elr, default_elr }),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.baselines.bootstrap_seed);
        let boot = match bootstrap_chain_ladder(&self.train, cfg.baselines.bootstrap_sims, &mut rng) {
            Ok(b) => b,
            Err(Error::InsufficientData(why)) => {
                log::warn!("skipping the bootstrap path: {why}");
                return Ok((policies, None));
            }
            Err(e) => return Err(e),
        };
        policies.push(StaticPathPolicy::new(
            "bootstrap",
            PathMethod::Bootstrap { mean_development: boot.mean_development.clone() },
        ));
        Ok((policies, Some(boot)))
    }
}

fn stage_dir(cfg: &RunConfig, stage: &str) -> PathBuf {
    cfg.out_path().join(stage)
}

fn report_meta(cfg: &RunConfig, inputs: &BTreeMap<String, String>) -> ReportMeta {
    ReportMeta {
        config_fingerprint: cfg.fingerprint(),
        seeds: cfg.seeds.clone(),
        inputs: inputs.clone(),
        config: cfg.to_json_value(),
    }
}

fn begin(cfg: &RunConfig, command: &str, dir: &Path, inputs: &BTreeMap<String, String>) -> Result<Manifest> {
    let mut m = Manifest::new(command, &cfg.fingerprint(), &cfg.seeds);
    m.inputs = inputs.clone();
    m.begin(dir)?;
    log::info!("{command}: writing {}", dir.display());
    Ok(m)
}

pub fn policy_file_name(seed: u64) -> String {
    format!("policy_seed{seed}.json")
}

/// Reads one trained policy per configured seed.
pub fn load_policies(cfg: &RunConfig, inputs: &mut BTreeMap<String, String>) -> Result<Vec<TrainedPolicy>> {
    let dir = stage_dir(cfg, TRAIN_DIR);
    cfg.seeds
        .iter()
        .map(|&seed| {
            let name = policy_file_name(seed);
            let path = dir.join(&name);
            if !path.is_file() {
                return Err(Error::MissingArtifact(path));
            }
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            inputs.insert(format!("{TRAIN_DIR}/{name}"), file_hash(&path)?);
            TrainedPolicy::from_json(&text).map_err(|source| Error::Json { path, source })
        })
        .collect()
}

/// Normalizes the configured triangle, splits it and estimates factors.
/// Writes `train.csv`, `test.csv`, `normalization.json` and `factors.csv`.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<Manifest> {
    let tri_path = cfg.triangle_path();
    let mut inputs = BTreeMap::new();
    inputs.insert("triangle".to_string(), file_hash(&tri_path)?);
    let raw = read_triangle(&tri_path)?;
    let prep = Prepared::from_triangle(&raw, cfg)?;
    let dir = stage_dir(cfg, INGEST_DIR);
    let mut m = begin(cfg, "ingest", &dir, &inputs)?;
    m.write_output(&dir, "train.csv", &prep.train.to_csv_string())?;
    m.write_output(&dir, "test.csv", &prep.test.to_csv_string())?;
    let norm = serde_json::to_string_pretty(&prep.normalization).expect("params serialize") + "\n";
    m.write_output(&dir, "normalization.json", &norm)?;
    m.write_output(&dir, "factors.csv", &prep.factors.to_csv_string())?;
    m.finish(&dir)?;
    Ok(m)
}

/// Trains one policy per seed over the configured curriculum.
pub fn cmd_train(cfg: &RunConfig) -> Result<Manifest> {
    let prep = Prepared::load(cfg)?;
    let (train, _) = prep.scenarios(cfg)?;
    let dir = stage_dir(cfg, TRAIN_DIR);
    let mut m = begin(cfg, "train", &dir, &prep.inputs)?;
    let runs = train_curriculum(
        &train.factory(),
        &cfg.ppo,
        &cfg.curriculum,
        &train.regimes,
        &cfg.seeds,
        cfg.workers,
        &cfg.fingerprint(),
    )?;
    let mut log = Vec::new();
    for run in &runs {
        m.write_output(&dir, &policy_file_name(run.policy.seed), &(run.policy.to_json() + "\n"))?;
        log.extend_from_slice(&run.log);
    }
    m.write_output(&dir, "training_log.csv", &training_log_csv(&log))?;
    m.finish(&dir)?;
    Ok(m)
}

fn write_suite(
    cfg: &RunConfig,
    suite: &str,
    rows: &[MetricsRow],
    inputs: &BTreeMap<String, String>,
    extra: &[(&str, String)],
) -> Result<Manifest> {
    let dir = stage_dir(cfg, EVAL_DIR).join(suite);
    let mut m = begin(cfg, suite, &dir, inputs)?;
    emit_report(rows, &dir, suite, &report_meta(cfg, inputs))?;
    m.record_output(&dir, &format!("{suite}.csv"))?;
    m.record_output(&dir, &format!("{suite}.json"))?;
    for (name, contents) in extra {
        m.write_output(&dir, name, contents)?;
    }
    m.finish(&dir)?;
    Ok(m)
}

/// Regime-stratified evaluation of the trained agent and the static
/// baselines on the held-out years.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Manifest> {
    let prep = Prepared::load(cfg)?;
    let mut inputs = prep.inputs.clone();
    let policies = load_policies(cfg, &mut inputs)?;
    let (_, test) = prep.scenarios(cfg)?;
    let (baselines, _) = prep.static_baselines(cfg)?;
    let mut models = vec![Model::Agent { name: AGENT_NAME, policies: &policies }];
    models.extend(baselines.iter().map(Model::Static));
    let rows = evaluate_stochastic(&models, &test, &cfg.eval_config())?;
    write_suite(cfg, "evaluate", &rows, &inputs, &[])
}

/// Fixed-shock stress evaluation of the trained agent.
pub fn cmd_stress(cfg: &RunConfig) -> Result<Manifest> {
    let prep = Prepared::load(cfg)?;
    let mut inputs = prep.inputs.clone();
    let policies = load_policies(cfg, &mut inputs)?;
    let (_, test) = prep.scenarios(cfg)?;
    let rows = stress_test(&[Model::Agent { name: AGENT_NAME, policies: &policies }], &test, &cfg.eval_config())?;
    write_suite(cfg, "stress", &rows, &inputs, &[])
}

/// Deterministic reserve tables on the raw triangle plus a stochastic
/// evaluation of the static baselines on the held-out years.
pub fn cmd_baselines(cfg: &RunConfig) -> Result<Manifest> {
    let prep = Prepared::load(cfg)?;
    let mut inputs = prep.inputs.clone();
    let tri_path = cfg.triangle_path();
    inputs.insert("triangle".to_string(), file_hash(&tri_path)?);
    let raw = read_triangle(&tri_path)?;
    let f = age_to_age_factors(&raw)?;
    let clm = chain_ladder_ultimates(&raw, &f)?;
    let bfm = bornhuetter_ferguson(&raw, &f, aggregate_loss_ratio(&raw, &f)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.baselines.bootstrap_seed);
    let boot = bootstrap_chain_ladder(&raw, cfg.baselines.bootstrap_sims, &mut rng)?;

    let (_, test) = prep.scenarios(cfg)?;
    let (baselines, _) = prep.static_baselines(cfg)?;
    let models: Vec<Model<'_>> = baselines.iter().map(Model::Static).collect();
    let rows = evaluate_stochastic(&models, &test, &cfg.eval_config())?;

    let extra = [("reserves.csv", estimates_to_csv(&[clm, bfm])), ("bootstrap.csv", bootstrap_csv(&boot))];
    write_suite(cfg, "baselines", &rows, &inputs, &extra)
}

/// Retrains per (alpha, floor) cell and evaluates each over all levels.
pub fn cmd_sensitivity(cfg: &RunConfig) -> Result<Manifest> {
    let prep = Prepared::load(cfg)?;
    let (train, test) = prep.scenarios(cfg)?;
    let rows = sensitivity_sweep(
        &train,
        &test,
        &cfg.ppo,
        &cfg.curriculum,
        &cfg.eval_config(),
        cfg.env.floor,
        &cfg.fingerprint(),
    )?;
    write_suite(cfg, "sensitivity", &rows, &prep.inputs, &[])
}

/// Collects every finished suite into `reports/summary.csv` and a
/// markdown digest.
pub fn cmd_report(cfg: &RunConfig) -> Result<Manifest> {
    let eval_dir = stage_dir(cfg, EVAL_DIR);
    let mut inputs = BTreeMap::new();
    let mut csv = String::from("suite,");
    csv.push_str(crate::eval::REPORT_HEADER);
    csv.push('\n');
    let mut md = String::from("# Reserve RL report\n");
    for suite in SUITES {
        let path = eval_dir.join(suite).join(format!("{suite}.json"));
        if !path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        inputs.insert(format!("{EVAL_DIR}/{suite}/{suite}.json"), file_hash(&path)?);
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })?;
        let rows: Vec<MetricsRow> = serde_json::from_value(doc["rows"].clone())
            .map_err(|source| Error::Json { path: path.clone(), source })?;
        for line in report_csv(&rows).lines().skip(1) {
            csv.push_str(&format!("{suite},{line}\n"));
        }
        md.push_str(&format!("\n## {suite}\n\n{}", markdown_table(&rows)));
    }
    if inputs.is_empty() {
        return Err(Error::MissingArtifact(eval_dir));
    }
    let dir = stage_dir(cfg, REPORTS_DIR);
    let mut m = begin(cfg, "report", &dir, &inputs)?;
    m.write_output(&dir, "summary.csv", &csv)?;
    m.write_output(&dir, "summary.md", &md)?;
    m.finish(&dir)?;
    Ok(m)
}

pub fn markdown_table(rows: &[MetricsRow]) -> String {
    let mut out = String::from("| model | condition | RAR | CVaR95 | CES | RVR | seeds |\n|---|---|---|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {:.3} ± {:.3} | {:.3} ± {:.3} | {:.3} ± {:.3} | {:.3} ± {:.3} | {} |\n",
            r.model, r.condition, r.rar, r.rar_sd, r.cvar95, r.cvar95_sd, r.ces, r.ces_sd, r.rvr, r.rvr_sd, r.n_seeds
        ));
    }
    out
}
