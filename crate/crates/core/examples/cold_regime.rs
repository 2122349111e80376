//! Train on calm and moderate regimes only, then face the recession regime.

use reserve_rl::cli::{markdown_table, read_triangle, Prepared};
use reserve_rl::config::RunConfig;
use reserve_rl::eval::cold_regime_test;

fn main() -> reserve_rl::Result<()> {
    let mut cfg = RunConfig { seeds: vec![0, 1, 2], ..RunConfig::default() };
    cfg.curriculum.episodes_per_level = 500;
    cfg.ppo.batch_size = 1000;

    let prep = Prepared::from_triangle(&read_triangle(&cfg.triangle_path())?, &cfg)?;
    let (train, test) = prep.scenarios(&cfg)?;
    let (baselines, _) = prep.static_baselines(&cfg)?;
    let report = cold_regime_test(&train, &test, &cfg.ppo, &cfg.curriculum, &baselines, &cfg.eval_config(), "example")?;
    let levels: Vec<u8> = report.runs[0].log.iter().map(|r| r.level).collect();
    println!("trained levels {:?}", {
        let mut l = levels;
        l.dedup();
        l
    });
    print!("{}", markdown_table(&report.rows));
    Ok(())
}
