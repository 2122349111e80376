//! Empirical tail risk over recent shortfalls.
//!
//! VaR uses the nearest-rank quantile (`ceil(alpha * N)`, 1-based). The
//! buffer CVaR averages every sample at or above that VaR, so ties at the
//! quantile are included. [`upper_tail_cvar`] is the fractional-weight tail
//! mean, which coincides with the minimum of the convex
//! `z + E[(L - z)+] / (1 - alpha)` objective evaluated by
//! [`cvar_rockafellar_oracle`].

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub const DEFAULT_BUFFER_CAPACITY: usize = 1024;
pub const ALPHA_MIN: f64 = 0.90;
pub const ALPHA_MAX: f64 = 0.95;

/// `max(20, ceil(1 / (1 - ALPHA_MAX)))`.
pub const DEFAULT_WARMUP_MIN: usize = 20;

/// Volatility-adaptive confidence level in `[0.90, 0.95]`.
pub fn adaptive_alpha(volatility: f64) -> f64 {
    ALPHA_MIN + (ALPHA_MAX - ALPHA_MIN) * volatility.clamp(0.0, 1.0)
}

/// 0-based position of the nearest-rank quantile in an ascending sort.
fn nearest_rank(n: usize, alpha: f64) -> usize {
    // the 1e-9 keeps products such as 0.95 * 100 from rounding up a rank
    let rank = (alpha * n as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, n) - 1
}

pub fn empirical_var(samples: &[f64], alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let mut scratch = samples.to_vec();
    Ok(select_var(&mut scratch, alpha))
}

fn select_var(scratch: &mut [f64], alpha: f64) -> f64 {
    let k = nearest_rank(scratch.len(), alpha);
    *scratch.select_nth_unstable_by(k, f64::total_cmp).1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub alpha: f64,
    pub var: f64,
    pub cvar: f64,
    pub tail_count: usize,
    /// Set when the buffer had fewer than its warmup minimum; `cvar` is 0.
    pub warmup: bool,
}

impl TailEstimate {
    /// Mean of all samples at or above the nearest-rank VaR.
    pub fn from_samples(samples: &[f64], alpha: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let mut scratch = samples.to_vec();
        Ok(Self::from_scratch(&mut scratch, alpha))
    }

    fn from_scratch(scratch: &mut [f64], alpha: f64) -> Self {
        let var = select_var(scratch, alpha);
        let (sum, count) = scratch
            .iter()
            .filter(|&&s| s >= var)
            .fold((0.0, 0usize), |(sum, n), &s| (sum + s, n + 1));
        Self { alpha, var, cvar: sum / count as f64, tail_count: count, warmup: false }
    }

    fn warmup(alpha: f64) -> Self {
        Self { alpha, var: 0.0, cvar: 0.0, tail_count: 0, warmup: true }
    }
}

/// Bounded FIFO ring of recent shortfalls.
#[derive(Debug, Clone)]
pub struct ShortfallBuffer {
    capacity: usize,
    warmup_min: usize,
    samples: VecDeque<f64>,
    pushed: u64,
    scratch: Vec<f64>,
}

impl Default for ShortfallBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_BUFFER_CAPACITY, DEFAULT_WARMUP_MIN)
    }
}

impl ShortfallBuffer {
    pub fn new(capacity: usize, warmup_min: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            capacity,
            warmup_min,
            samples: VecDeque::with_capacity(capacity),
            pushed: 0,
            scratch: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, shortfall: f64) {
        debug_assert!(shortfall >= 0.0, "shortfall must be non-negative");
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(shortfall.max(0.0));
        self.pushed += 1;
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().copied()
    }

    pub fn var(&self, alpha: f64) -> Result<f64> {
        let v: Vec<f64> = self.samples().collect();
        empirical_var(&v, alpha)
    }

    /// Tail estimate; zero with the warmup flag until `warmup_min` samples.
    pub fn cvar(&mut self, alpha: f64) -> TailEstimate {
        if self.samples.len() < self.warmup_min.max(1) {
            return TailEstimate::warmup(alpha);
        }
        self.scratch.clear();
        self.scratch.extend(self.samples.iter().copied());
        TailEstimate::from_scratch(&mut self.scratch, alpha)
    }

    /// Audit dump: `step_index,shortfall`, indices counted over all pushes.
    pub fn to_csv_string(&self) -> String {
        let first = self.pushed - self.samples.len() as u64;
        let mut out = String::from("step_index,shortfall\n");
        for (i, s) in self.samples.iter().enumerate() {
            out.push_str(&format!("{},{}\n", first + i as u64, s));
        }
        out
    }
}

/// Fractional-weight tail mean: the worst `(1 - alpha) * N` samples, with
/// the boundary sample weighted by the leftover fraction.
pub fn upper_tail_cvar(samples: &[f64], alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mass = (1.0 - alpha) * sorted.len() as f64;
    let whole = (mass.floor() as usize).min(sorted.len());
    let frac = mass - whole as f64;
    let mut sum: f64 = sorted[..whole].iter().sum();
    if whole < sorted.len() {
        sum += frac * sorted[whole];
    }
    Ok(sum / mass)
}

/// Minimum over sample points of `z + mean((x - z)+) / (1 - alpha)`.
/// The objective is piecewise linear with kinks at the samples, so the
/// minimum is attained at one of them.
pub fn cvar_rockafellar_oracle(samples: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if samples.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let n = samples.len() as f64;
    let objective = |z: f64| z + samples.iter().map(|&x| (x - z).max(0.0)).sum::<f64>() / (n * (1.0 - alpha));
    Ok(samples.iter().map(|&z| objective(z)).fold(f64::INFINITY, f64::min))
}
