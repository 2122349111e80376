//! Loss development triangles: ingestion, normalization, rolling-origin
//! splitting and volume-weighted age-to-age factors.
//!
//! Only cumulative incurred drives the environment and the baselines; paid
//! losses and premium are carried along so that the artifacts written by the
//! ingest stage round-trip the source file.

use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] =
    ["accident_year", "dev_lag", "cum_incurred", "cum_paid", "earned_premium"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleCell {
    pub accident_year: i32,
    /// Development period, 1-based.
    pub dev_lag: u32,
    pub cum_incurred: f64,
    pub cum_paid: f64,
    pub earned_premium: f64,
}

/// Cumulative run-off triangle. Cells are kept sorted by
/// `(accident_year, dev_lag)` so each accident year is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTriangle {
    cells: Vec<TriangleCell>,
    years: Vec<i32>,
    /// Full development depth `T`. Sub-triangles produced by a split keep
    /// the depth of their parent even when none of their rows reach it.
    n_dev_lags: usize,
}

impl LossTriangle {
    /// Builds a triangle whose depth is the largest lag present.
    pub fn new(cells: Vec<TriangleCell>) -> Result<Self> {
        let depth = cells.iter().map(|c| c.dev_lag as usize).max().unwrap_or(0);
        Self::with_depth(cells, depth)
    }

    pub fn with_depth(mut cells: Vec<TriangleCell>, n_dev_lags: usize) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::EmptyTriangle);
        }
        if n_dev_lags < 2 {
            return Err(Error::IrregularShape(format!(
                "need at least 2 development lags, got {n_dev_lags}"
            )));
        }
        cells.sort_by_key(|c| (c.accident_year, c.dev_lag));
        for pair in cells.windows(2) {
            if pair[0].accident_year == pair[1].accident_year && pair[0].dev_lag == pair[1].dev_lag {
                return Err(Error::DuplicateCell {
                    accident_year: pair[0].accident_year,
                    dev_lag: pair[0].dev_lag,
                });
            }
        }

        let mut years = Vec::new();
        let mut prev_len = usize::MAX;
        let mut start = 0;
        while start < cells.len() {
            let year = cells[start].accident_year;
            let end = start + cells[start..].iter().take_while(|c| c.accident_year == year).count();
            let row = &cells[start..end];
            for (k, cell) in row.iter().enumerate() {
                if cell.dev_lag as usize != k + 1 {
                    return Err(Error::IrregularShape(format!(
                        "accident year {year} is missing lag {}",
                        k + 1
                    )));
                }
                if cell.dev_lag as usize > n_dev_lags {
                    return Err(Error::IrregularShape(format!(
                        "accident year {year} has lag {} beyond depth {n_dev_lags}",
                        cell.dev_lag
                    )));
                }
                let p0 = row[0].earned_premium;
                if (cell.earned_premium - p0).abs() > 1e-9 * p0.abs().max(1.0) {
                    return Err(Error::IrregularShape(format!(
                        "earned premium varies across lags for accident year {year}"
                    )));
                }
            }
            if row.len() > prev_len {
                return Err(Error::IrregularShape(format!(
                    "accident year {year} is developed further than an earlier year"
                )));
            }
            prev_len = row.len();
            years.push(year);
            start = end;
        }

        Ok(Self { cells, years, n_dev_lags })
    }

    pub fn cells(&self) -> &[TriangleCell] {
        &self.cells
    }

    pub fn accident_years(&self) -> &[i32] {
        &self.years
    }

    pub fn n_accident_years(&self) -> usize {
        self.years.len()
    }

    pub fn n_dev_lags(&self) -> usize {
        self.n_dev_lags
    }

    /// All cells of one accident year, ordered by lag.
    pub fn row(&self, accident_year: i32) -> &[TriangleCell] {
        let start = self.cells.partition_point(|c| c.accident_year < accident_year);
        let end = self.cells.partition_point(|c| c.accident_year <= accident_year);
        &self.cells[start..end]
    }

    pub fn get(&self, accident_year: i32, dev_lag: u32) -> Option<&TriangleCell> {
        self.row(accident_year).get((dev_lag as usize).checked_sub(1)?)
    }

    /// Latest observed diagonal cell of an accident year.
    pub fn latest(&self, accident_year: i32) -> Option<&TriangleCell> {
        self.row(accident_year).last()
    }

    pub fn premium(&self, accident_year: i32) -> Option<f64> {
        self.row(accident_year).first().map(|c| c.earned_premium)
    }

    pub fn max_incurred(&self) -> f64 {
        self.cells.iter().map(|c| c.cum_incurred).fold(0.0, f64::max)
    }

    /// Applies `f` to every monetary field; the shape is unchanged.
    pub fn map_amounts(&self, f: impl Fn(f64) -> f64) -> Self {
        let cells = self
            .cells
            .iter()
            .map(|c| TriangleCell {
                cum_incurred: f(c.cum_incurred),
                cum_paid: f(c.cum_paid),
                earned_premium: f(c.earned_premium),
                ..*c
            })
            .collect();
        Self { cells, years: self.years.clone(), n_dev_lags: self.n_dev_lags }
    }

    /// Restricts to the given accident years, keeping the parent's depth.
    fn subset(&self, years: &[i32]) -> Result<Self> {
        let keep: BTreeSet<i32> = years.iter().copied().collect();
        let cells: Vec<_> =
            self.cells.iter().filter(|c| keep.contains(&c.accident_year)).copied().collect();
        Self::with_depth(cells, self.n_dev_lags)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = CSV_HEADER.join(",");
        out.push('\n');
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.accident_year, c.dev_lag, c.cum_incurred, c.cum_paid, c.earned_premium
            ));
        }
        out
    }
}

/// Parses the five-column triangle CSV. Either the whole file becomes a
/// triangle or a typed error is returned.
pub fn parse_triangle_csv(input: impl Read) -> Result<LossTriangle> {
    LossTriangle::new(parse_cells(input)?)
}

/// Like [`parse_triangle_csv`] with a fixed number of lags, for held-out
/// years that are not yet developed to the full depth.
pub fn parse_triangle_csv_with_depth(input: impl Read, n_dev_lags: usize) -> Result<LossTriangle> {
    LossTriangle::with_depth(parse_cells(input)?, n_dev_lags)
}

fn parse_cells(input: impl Read) -> Result<Vec<TriangleCell>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRow { line: 1, reason: e.to_string() })?
        .clone();
    if headers.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }

    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != CSV_HEADER.len() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {} fields, got {}", CSV_HEADER.len(), record.len()),
            });
        }
        let bad = |field: &str, value: &str| Error::MalformedRow {
            line,
            reason: format!("invalid {field} `{value}`"),
        };
        let accident_year: i32 =
            record[0].trim().parse().map_err(|_| bad("accident_year", &record[0]))?;
        let dev_lag: u32 = record[1].trim().parse().map_err(|_| bad("dev_lag", &record[1]))?;
        if dev_lag == 0 {
            return Err(bad("dev_lag", &record[1]));
        }
        let amount = |idx: usize| -> Result<f64> {
            let v: f64 = record[idx].trim().parse().map_err(|_| bad(CSV_HEADER[idx], &record[idx]))?;
            if !v.is_finite() || v < 0.0 {
                return Err(bad(CSV_HEADER[idx], &record[idx]));
            }
            Ok(v)
        };
        cells.push(TriangleCell {
            accident_year,
            dev_lag,
            cum_incurred: amount(2)?,
            cum_paid: amount(3)?,
            earned_premium: amount(4)?,
        });
    }
    Ok(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub scale: f64,
    pub offset: f64,
}

impl NormalizationParams {
    pub fn denormalize(&self, tri: &LossTriangle) -> LossTriangle {
        tri.map_amounts(|v| v * self.scale + self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub a_train: usize,
    pub a_test: usize,
}

impl SplitSpec {
    fn validate(&self, tri: &LossTriangle) -> Result<()> {
        if self.a_train < 2 {
            return Err(Error::InvalidSplit(format!(
                "a_train = {} (need at least 2 accident years to estimate factors)",
                self.a_train
            )));
        }
        if self.a_test < 1 {
            return Err(Error::InvalidSplit("a_test must be at least 1".into()));
        }
        if self.a_train + self.a_test != tri.n_accident_years() {
            return Err(Error::InvalidSplit(format!(
                "a_train + a_test = {} but triangle has {} accident years",
                self.a_train + self.a_test,
                tri.n_accident_years()
            )));
        }
        Ok(())
    }
}

/// Divides every amount by the largest cumulative incurred of the training
/// accident years. Held-out years may exceed 1 afterwards.
pub fn normalize(tri: &LossTriangle, split: SplitSpec) -> Result<(LossTriangle, NormalizationParams)> {
    split.validate(tri)?;
    let train_years = &tri.accident_years()[..split.a_train];
    let scale = train_years
        .iter()
        .flat_map(|&y| tri.row(y))
        .map(|c| c.cum_incurred)
        .fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(Error::DegenerateScale);
    }
    let params = NormalizationParams { scale, offset: 0.0 };
    Ok((tri.map_amounts(|v| v / scale), params))
}

/// First `a_train` accident years train, the remainder are held out.
pub fn split_rolling_origin(tri: &LossTriangle, spec: SplitSpec) -> Result<(LossTriangle, LossTriangle)> {
    spec.validate(tri)?;
    let (train, test) = tri.accident_years().split_at(spec.a_train);
    Ok((tri.subset(train)?, tri.subset(test)?))
}

/// Age-to-age factors `f_1..f_{T-1}`; `f_j` projects lag `j` to lag `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevelopmentFactors(Vec<f64>);

impl DevelopmentFactors {
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InsufficientData("no development factors".into()));
        }
        if let Some(bad) = factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(Error::InsufficientData(format!("non-positive factor {bad}")));
        }
        Ok(Self(factors))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Factor applied when leaving lag `lag` (1-based); 1.0 past the last
    /// estimated factor since no tail is extrapolated.
    pub fn leaving(&self, lag: usize) -> f64 {
        lag.checked_sub(1).and_then(|i| self.0.get(i)).copied().unwrap_or(1.0)
    }

    /// Product of the factors from `lag` through the end of the triangle.
    pub fn to_ultimate(&self, lag: usize) -> f64 {
        self.0.iter().skip(lag.saturating_sub(1)).product()
    }

    /// Chain-ladder projection of `start` (observed at lag 1) over `horizon`
    /// lags: `start, start*f_1, start*f_1*f_2, ...`.
    pub fn project(&self, start: f64, horizon: usize) -> Vec<f64> {
        let mut path = Vec::with_capacity(horizon);
        let mut level = start;
        for lag in 1..=horizon {
            path.push(level);
            level *= self.leaving(lag);
        }
        path
    }

    /// Reads the table written by [`DevelopmentFactors::to_csv_string`].
    pub fn parse_csv(input: impl Read) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let mut factors = Vec::new();
        for (k, record) in reader.records().enumerate() {
            let line = k + 2;
            let record = record.map_err(|e| Error::MalformedRow { line, reason: e.to_string() })?;
            let lag: usize = record.get(0).and_then(|v| v.trim().parse().ok()).unwrap_or(0);
            if lag != k + 1 {
                return Err(Error::MalformedRow { line, reason: format!("expected from_lag {}", k + 1) });
            }
            let f: f64 = record
                .get(2)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::MalformedRow { line, reason: "invalid factor".into() })?;
            factors.push(f);
        }
        Self::new(factors)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("from_lag,to_lag,factor\n");
        for (i, f) in self.0.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, i + 2, f));
        }
        out
    }
}

/// Volume-weighted chain-ladder factors over accident years observed at both
/// lags of each pair.
pub fn age_to_age_factors(tri: &LossTriangle) -> Result<DevelopmentFactors> {
    let depth = tri.n_dev_lags();
    let mut factors = Vec::with_capacity(depth - 1);
    for lag in 1..depth as u32 {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut pairs = 0;
        for &year in tri.accident_years() {
            if let (Some(a), Some(b)) = (tri.get(year, lag), tri.get(year, lag + 1)) {
                num += b.cum_incurred;
                den += a.cum_incurred;
                pairs += 1;
            }
        }
        if pairs == 0 {
            return Err(Error::InsufficientData(format!("no accident year observed at lags {lag} and {}", lag + 1)));
        }
        if den == 0.0 {
            return Err(Error::ZeroDenominator { lag });
        }
        factors.push(num / den);
    }
    DevelopmentFactors::new(factors)
}
