//! Classical reserving baselines and their replay through the environment.
//!
//! The bootstrap is the over-dispersed Poisson residual bootstrap: fit the
//! chain ladder, back out fitted incrementals, resample scaled Pearson
//! residuals into pseudo-triangles, refit, and add Gamma process noise to the
//! projected future increments.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::env::{EnvState, EpisodeStart, ReservePolicy, ReservingEnv, StepRecord, ACTION_GRID, HOLD_ACTION};
use crate::error::{Error, Result};
use crate::triangles::{DevelopmentFactors, LossTriangle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearEstimate {
    pub accident_year: i32,
    pub latest: f64,
    pub ultimate: f64,
    pub reserve: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveEstimate {
    pub method: String,
    pub years: Vec<YearEstimate>,
}

impl ReserveEstimate {
    pub fn total_reserve(&self) -> f64 {
        self.years.iter().map(|y| y.reserve).sum()
    }

    pub fn total_ultimate(&self) -> f64 {
        self.years.iter().map(|y| y.ultimate).sum()
    }

    pub fn reserves(&self) -> Vec<f64> {
        self.years.iter().map(|y| y.reserve).collect()
    }
}

pub const BASELINE_CSV_HEADER: &str = "method,accident_year,latest,ultimate,reserve";

pub fn estimates_to_csv(estimates: &[ReserveEstimate]) -> String {
    let mut out = String::from(BASELINE_CSV_HEADER);
    out.push('\n');
    for e in estimates {
        for y in &e.years {
            out.push_str(&format!("{},{},{},{},{}\n", e.method, y.accident_year, y.latest, y.ultimate, y.reserve));
        }
    }
    out
}

/// Cumulative development from the latest observed lag of each year to the
/// end of the triangle.
fn remaining_development(tri: &LossTriangle, factors: &DevelopmentFactors, year: i32) -> Result<(f64, f64)> {
    let latest = tri.latest(year).expect("year comes from the triangle");
    let lag = latest.dev_lag as usize;
    let needed = tri.n_dev_lags() - 1;
    if factors.len() < needed {
        return Err(Error::InsufficientData(format!(
            "{} factors cannot develop {} lags",
            factors.len(),
            tri.n_dev_lags()
        )));
    }
    let cdf: f64 = factors.as_slice()[lag - 1..needed].iter().product();
    Ok((latest.cum_incurred, cdf))
}

pub fn chain_ladder_ultimates(tri: &LossTriangle, factors: &DevelopmentFactors) -> Result<ReserveEstimate> {
    let mut years = Vec::with_capacity(tri.n_accident_years());
    for &y in tri.accident_years() {
        let (latest, cdf) = remaining_development(tri, factors, y)?;
        let ultimate = latest * cdf;
        years.push(YearEstimate { accident_year: y, latest, ultimate, reserve: ultimate - latest });
    }
    Ok(ReserveEstimate { method: "clm".into(), years })
}

/// Chain-ladder ultimate over premium, per accident year.
pub fn implied_loss_ratios(tri: &LossTriangle, factors: &DevelopmentFactors) -> Result<BTreeMap<i32, f64>> {
    let cl = chain_ladder_ultimates(tri, factors)?;
    cl.years
        .iter()
        .map(|y| match tri.premium(y.accident_year) {
            Some(p) if p > 0.0 => Ok((y.accident_year, y.ultimate / p)),
            _ => Err(Error::MissingPremium(y.accident_year)),
        })
        .collect()
}

/// Premium-weighted chain-ladder loss ratio over the whole triangle.
pub fn aggregate_loss_ratio(tri: &LossTriangle, factors: &DevelopmentFactors) -> Result<f64> {
    let cl = chain_ladder_ultimates(tri, factors)?;
    let mut premium = 0.0;
    for &y in tri.accident_years() {
        premium += tri.premium(y).filter(|p| *p > 0.0).ok_or(Error::MissingPremium(y))?;
    }
    Ok(cl.total_ultimate() / premium)
}

pub fn bornhuetter_ferguson(tri: &LossTriangle, factors: &DevelopmentFactors, elr: f64) -> Result<ReserveEstimate> {
    bornhuetter_ferguson_with(tri, factors, |_| elr)
}

/// Bornhuetter-Ferguson with a per-year expected loss ratio.
pub fn bornhuetter_ferguson_with(
    tri: &LossTriangle,
    factors: &DevelopmentFactors,
    elr: impl Fn(i32) -> f64,
) -> Result<ReserveEstimate> {
    let mut years = Vec::with_capacity(tri.n_accident_years());
    for &y in tri.accident_years() {
        let premium = tri.premium(y).filter(|p| *p > 0.0).ok_or(Error::MissingPremium(y))?;
        let (latest, cdf) = remaining_development(tri, factors, y)?;
        let reserve = premium * elr(y) * (1.0 - 1.0 / cdf);
        years.push(YearEstimate { accident_year: y, latest, ultimate: latest + reserve, reserve });
    }
    Ok(ReserveEstimate { method: "bfm".into(), years })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub n_sims: usize,
    pub reserve_samples: Vec<f64>,
    pub mean: f64,
    pub stddev: f64,
    /// `(probability, quantile)` pairs, ascending.
    pub quantiles: Vec<(f64, f64)>,
    /// Scale parameter estimated from the Pearson residuals.
    pub phi: f64,
    /// Mean over simulations of the cumulative development multiplier from
    /// lag 1 to each lag (first entry 1).
    pub mean_development: Vec<f64>,
}

const QUANTILE_PROBS: [f64; 5] = [0.5, 0.75, 0.9, 0.95, 0.99];

pub fn bootstrap_csv(result: &BootstrapResult) -> String {
    let mut out = String::from("sim,total_reserve\n");
    for (i, r) in result.reserve_samples.iter().enumerate() {
        out.push_str(&format!("{i},{r}\n"));
    }
    out
}

/// Volume-weighted factors of a cumulative matrix; `None` when a column
/// pair has a non-positive denominator or yields a non-positive factor.
fn matrix_factors(rows: &[Vec<f64>], depth: usize) -> Option<Vec<f64>> {
    (0..depth - 1)
        .map(|j| {
            let (mut num, mut den) = (0.0, 0.0);
            for r in rows.iter().filter(|r| r.len() > j + 1) {
                num += r[j + 1];
                den += r[j];
            }
            let f = num / den;
            (den > 0.0 && f > 0.0 && f.is_finite()).then_some(f)
        })
        .collect()
}

fn nearest_rank_quantile(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64 - 1e-9).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn bootstrap_chain_ladder<R: Rng + ?Sized>(tri: &LossTriangle, n_sims: usize, rng: &mut R) -> Result<BootstrapResult> {
    if tri.n_accident_years() < 3 {
        return Err(Error::InsufficientData("bootstrap needs at least 3 accident years".into()));
    }
    if n_sims == 0 {
        return Err(Error::InsufficientData("bootstrap needs at least one simulation".into()));
    }
    let depth = tri.n_dev_lags();
    let cum: Vec<Vec<f64>> = tri
        .accident_years()
        .iter()
        .map(|&y| tri.row(y).iter().map(|c| c.cum_incurred).collect())
        .collect();
    let factors = matrix_factors(&cum, depth)
        .ok_or_else(|| Error::InsufficientData("triangle does not support chain-ladder factors".into()))?;

    // fitted cumulative values run backwards from the latest diagonal
    let fitted_inc: Vec<Vec<f64>> = cum
        .iter()
        .map(|row| {
            let k = row.len();
            let mut fitted = vec![0.0; k];
            fitted[k - 1] = row[k - 1];
            for j in (0..k - 1).rev() {
                fitted[j] = fitted[j + 1] / factors[j];
            }
            (0..k).map(|j| if j == 0 { fitted[0] } else { fitted[j] - fitted[j - 1] }).collect()
        })
        .collect();
    let actual_inc: Vec<Vec<f64>> = cum
        .iter()
        .map(|row| (0..row.len()).map(|j| if j == 0 { row[0] } else { row[j] - row[j - 1] }).collect())
        .collect();

    let mut residuals = Vec::new();
    for (fit_row, act_row) in fitted_inc.iter().zip(&actual_inc) {
        for (&m, &x) in fit_row.iter().zip(act_row) {
            if !(m > 0.0) {
                return Err(Error::DegenerateResiduals(format!("fitted incremental {m} is not positive")));
            }
            residuals.push((x - m) / m.sqrt());
        }
    }
    let n = residuals.len();
    let p = tri.n_accident_years() + depth - 1;
    if n <= p {
        return Err(Error::InsufficientData(format!("{n} cells cannot fit {p} parameters")));
    }
    let df = (n - p) as f64;
    let phi = residuals.iter().map(|r| r * r).sum::<f64>() / df;
    if !phi.is_finite() {
        return Err(Error::DegenerateResiduals("non-finite scale parameter".into()));
    }
    let adjust = (n as f64 / df).sqrt();
    let adjusted: Vec<f64> = residuals.iter().map(|r| r * adjust).collect();

    let mut samples = Vec::with_capacity(n_sims);
    let mut dev_sum = vec![0.0; depth];
    for _ in 0..n_sims {
        let mut attempts = 0;
        let (pseudo, pf) = loop {
            let pseudo: Vec<Vec<f64>> = fitted_inc
                .iter()
                .map(|row| {
                    let mut acc = 0.0;
                    row.iter()
                        .map(|&m| {
                            acc += m + adjusted[rng.random_range(0..n)] * m.sqrt();
                            acc
                        })
                        .collect()
                })
                .collect();
            if let Some(pf) = matrix_factors(&pseudo, depth) {
                break (pseudo, pf);
            }
            attempts += 1;
            if attempts == 100 {
                return Err(Error::DegenerateResiduals("pseudo-triangles keep producing invalid factors".into()));
            }
        };

        let mut total = 0.0;
        for row in &pseudo {
            let mut level = row[row.len() - 1];
            for &f in &pf[row.len() - 1..] {
                let mean_inc = level * (f - 1.0);
                let inc = if phi > 0.0 && mean_inc > 0.0 {
                    Gamma::new(mean_inc / phi, phi)
                        .map_err(|e| Error::DegenerateResiduals(e.to_string()))?
                        .sample(rng)
                } else {
                    mean_inc
                };
                total += inc;
                level += inc;
            }
        }
        samples.push(total);

        let mut m = 1.0;
        for (j, slot) in dev_sum.iter_mut().enumerate() {
            *slot += m;
            if j < pf.len() {
                m *= pf[j];
            }
        }
    }

    let mean = samples.iter().sum::<f64>() / n_sims as f64;
    let stddev = if n_sims > 1 {
        (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n_sims - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = QUANTILE_PROBS.iter().map(|&q| (q, nearest_rank_quantile(&sorted, q))).collect();
    Ok(BootstrapResult {
        n_sims,
        reserve_samples: samples,
        mean,
        stddev,
        quantiles,
        phi,
        mean_development: dev_sum.into_iter().map(|s| s / n_sims as f64).collect(),
    })
}

/// Per-step target reserve levels `R_0..R_{T-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservePath(pub Vec<f64>);

/// How a static baseline turns an episode's starting point into a path.
#[derive(Debug, Clone, PartialEq)]
pub enum PathMethod {
    ChainLadder(DevelopmentFactors),
    /// Expected cumulative `L_0 + premium * ELR * (p_t - p_1)` with `p` the
    /// chain-ladder percent developed. Years without their own ratio use
    /// `default_elr`.
    BornhuetterFerguson {
        factors: DevelopmentFactors,
        elr: BTreeMap<i32, f64>,
        default_elr: f64,
    },
    /// `L_0` times the bootstrap mean cumulative development.
    Bootstrap { mean_development: Vec<f64> },
}

/// Expected cumulative incurred at lags `1..=horizon` starting from the
/// episode's lag-1 value. Fixed before the episode; never sees shocks.
pub fn static_reserve_path(method: &PathMethod, start: &EpisodeStart, horizon: usize) -> ReservePath {
    let l0 = start.initial_incurred;
    let path = match method {
        PathMethod::ChainLadder(f) => f.project(l0, horizon),
        PathMethod::BornhuetterFerguson { factors, elr, default_elr } => {
            let elr = elr.get(&start.accident_year).copied().unwrap_or(*default_elr);
            let depth = factors.len() + 1;
            let pct = |lag: usize| 1.0 / factors.to_ultimate(lag.min(depth));
            let p1 = pct(1);
            (1..=horizon).map(|lag| (l0 + start.premium * elr * (pct(lag) - p1)).max(0.0)).collect()
        }
        PathMethod::Bootstrap { mean_development } => (0..horizon)
            .map(|t| l0 * mean_development.get(t).or(mean_development.last()).copied().unwrap_or(1.0))
            .collect(),
    };
    ReservePath(path)
}

/// Replays a static path with the agent's action constraints: each step
/// moves toward the next target by the nearest grid adjustment, which
/// saturates at the extreme actions when the target is out of reach.
#[derive(Debug, Clone)]
pub struct StaticPathPolicy {
    name: String,
    method: PathMethod,
    path: ReservePath,
}

impl StaticPathPolicy {
    pub fn new(name: impl Into<String>, method: PathMethod) -> Self {
        Self { name: name.into(), method, path: ReservePath(Vec::new()) }
    }

    pub fn path(&self) -> &ReservePath {
        &self.path
    }

    pub fn method(&self) -> &PathMethod {
        &self.method
    }
}

/// Grid index closest to the adjustment `desired`; ties go to the smaller
/// magnitude.
pub fn nearest_grid_action(desired: f64) -> usize {
    let mut best = HOLD_ACTION;
    for &i in &[2, 4, 1, 5, 0, 6] {
        if (ACTION_GRID[i] - desired).abs() < (ACTION_GRID[best] - desired).abs() {
            best = i;
        }
    }
    best
}

impl ReservePolicy for StaticPathPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn begin_episode(&mut self, start: &EpisodeStart, horizon: usize) {
        self.path = static_reserve_path(&self.method, start, horizon);
    }

    fn act(&mut self, state: &EnvState) -> Result<usize> {
        let path = &self.path.0;
        if path.is_empty() {
            return Err(Error::LengthMismatch("static path used before begin_episode".into()));
        }
        if state.reserve <= 0.0 {
            return Ok(HOLD_ACTION);
        }
        let target = path[(state.t + 1).min(path.len() - 1)];
        Ok(nearest_grid_action(target / state.reserve - 1.0))
    }
}

/// Runs a static baseline for `episodes` episodes.
pub fn replay_static_policy(policy: &mut StaticPathPolicy, env: &mut ReservingEnv, episodes: usize) -> Result<Vec<StepRecord>> {
    crate::env::run_episodes(policy, env, episodes)
}
