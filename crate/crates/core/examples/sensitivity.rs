//! Sweep the CVaR confidence level and the solvency floor. Each cell trains
//! its own agents, so this takes a while in release mode.

use reserve_rl::cli::{markdown_table, read_triangle, Prepared};
use reserve_rl::config::RunConfig;
use reserve_rl::eval::sensitivity_sweep;

fn main() -> reserve_rl::Result<()> {
    let mut cfg = RunConfig { seeds: vec![0, 1, 2], ..RunConfig::default() };
    cfg.curriculum.episodes_per_level = 300;
    cfg.ppo.batch_size = 1000;
    cfg.eval.episodes = 40;

    let prep = Prepared::from_triangle(&read_triangle(&cfg.triangle_path())?, &cfg)?;
    let (train, test) = prep.scenarios(&cfg)?;
    let rows = sensitivity_sweep(&train, &test, &cfg.ppo, &cfg.curriculum, &cfg.eval_config(), cfg.env.floor, "example")?;
    print!("{}", markdown_table(&rows));
    Ok(())
}
