#![allow(dead_code)]

use std::path::PathBuf;

use proptest::prelude::*;
use reserve_rl::cli::{read_triangle, Prepared};
use reserve_rl::config::RunConfig;
use reserve_rl::eval::Scenario;
use reserve_rl::triangles::{LossTriangle, TriangleCell};

pub const TEXTBOOK: &str = "accident_year,dev_lag,cum_incurred,cum_paid,earned_premium
2001,1,100,60,200
2001,2,150,110,200
2001,3,175,170,200
2002,1,110,70,220
2002,2,165,120,220
2003,1,120,65,240
";

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn config_for(triangle: &str) -> RunConfig {
    RunConfig { triangle: data_dir().join(triangle), ..RunConfig::default() }
}

/// Train and held-out scenarios for a bundled triangle.
pub fn scenarios(cfg: &RunConfig) -> (Prepared, Scenario, Scenario) {
    let raw = read_triangle(&cfg.triangle_path()).unwrap();
    let prep = Prepared::from_triangle(&raw, cfg).unwrap();
    let (train, test) = prep.scenarios(cfg).unwrap();
    (prep, train, test)
}

/// Run-off triangles with `n` accident years and `n` lags, developing by
/// factors in [1, 1.6).
pub fn runoff_triangle() -> impl Strategy<Value = LossTriangle> {
    (3usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(10.0f64..1000.0, n),
            prop::collection::vec(prop::collection::vec(1.0f64..1.6, n), n),
            prop::collection::vec(100.0f64..3000.0, n),
        )
            .prop_map(move |(first, growth, premium)| {
                let mut cells = Vec::new();
                for i in 0..n {
                    let mut inc = first[i];
                    for lag in 1..=(n - i) {
                        if lag > 1 {
                            inc *= growth[i][lag - 1];
                        }
                        cells.push(TriangleCell {
                            accident_year: 2000 + i as i32,
                            dev_lag: lag as u32,
                            cum_incurred: inc,
                            cum_paid: 0.5 * inc,
                            earned_premium: premium[i],
                        });
                    }
                }
                LossTriangle::with_depth(cells, n).unwrap()
            })
    })
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
