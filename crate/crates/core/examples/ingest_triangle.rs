//! Parse a triangle, normalize it on the training years and estimate
//! development factors.
//!
//! cargo run --example ingest_triangle -- data/other_liability.csv

use reserve_rl::cli::read_triangle;
use reserve_rl::triangles::{age_to_age_factors, normalize, split_rolling_origin, SplitSpec};

fn main() -> reserve_rl::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/workers_comp.csv".into());
    let raw = read_triangle(path.as_ref())?;
    println!("{} accident years x {} lags", raw.n_accident_years(), raw.n_dev_lags());

    let split = SplitSpec { a_train: raw.n_accident_years() - 2, a_test: 2 };
    let (norm, params) = normalize(&raw, split)?;
    let (train, test) = split_rolling_origin(&norm, split)?;
    println!("scale {:.2}, train years {:?}, test years {:?}", params.scale, train.accident_years(), test.accident_years());

    let f = age_to_age_factors(&train)?;
    for (lag, factor) in f.as_slice().iter().enumerate() {
        println!("  {:>2} -> {:>2}: {factor:.4}  (to ultimate {:.4})", lag + 1, lag + 2, f.to_ultimate(lag + 1));
    }
    Ok(())
}
