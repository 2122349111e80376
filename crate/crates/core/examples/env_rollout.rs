//! Roll the chain-ladder path through the reserving environment under each
//! regime and print the step trace of one episode.

use reserve_rl::baselines::{PathMethod, StaticPathPolicy};
use reserve_rl::cli::read_triangle;
use reserve_rl::env::{run_episodes, trace_to_csv, EnvConfig, ReservingEnv};
use reserve_rl::regimes::{RegimeTable, ShockMode, REGIME_NAMES};
use reserve_rl::triangles::{age_to_age_factors, normalize, split_rolling_origin, SplitSpec};

fn main() -> reserve_rl::Result<()> {
    let raw = read_triangle("data/workers_comp.csv".as_ref())?;
    let split = SplitSpec { a_train: 8, a_test: 2 };
    let (norm, _) = normalize(&raw, split)?;
    let (train, _) = split_rolling_origin(&norm, split)?;
    let f = age_to_age_factors(&train)?;
    let table = RegimeTable::default();

    for level in 0..4u8 {
        let cfg = EnvConfig { seed: 5, shock_mode: ShockMode::Stochastic { level }, ..EnvConfig::new(10) };
        let mut env = ReservingEnv::new(&train, &f, cfg, &table)?;
        let mut clm = StaticPathPolicy::new("clm", PathMethod::ChainLadder(f.clone()));
        let records = run_episodes(&mut clm, &mut env, 50)?;
        let mean_reward = records.iter().map(|r| r.reward).sum::<f64>() / records.len() as f64;
        let violations = records.iter().filter(|r| r.violated).count();
        println!("level {level} ({}): mean step reward {mean_reward:.3}, violations {violations}", REGIME_NAMES[level as usize]);
        if level == 3 {
            print!("{}", trace_to_csv(&records[..10]));
        }
    }
    Ok(())
}
