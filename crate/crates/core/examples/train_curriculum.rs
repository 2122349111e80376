//! Train PPO agents over the calm-to-recession curriculum and save them.
//!
//! cargo run --release --example train_curriculum -- 1000

use reserve_rl::agent::train_curriculum;
use reserve_rl::cli::{read_triangle, Prepared};
use reserve_rl::config::RunConfig;

fn main() -> reserve_rl::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RESERVE_RL_LOG", "info")).init();
    let episodes: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let mut cfg = RunConfig { seeds: vec![0, 1], ..RunConfig::default() };
    cfg.curriculum.episodes_per_level = episodes;
    cfg.ppo.batch_size = 500;
    cfg.ppo.minibatch_size = 250;

    let prep = Prepared::from_triangle(&read_triangle(&cfg.triangle_path())?, &cfg)?;
    let (train, _) = prep.scenarios(&cfg)?;
    let runs = train_curriculum(&train.factory(), &cfg.ppo, &cfg.curriculum, &train.regimes, &cfg.seeds, 2, &cfg.fingerprint())?;

    for run in &runs {
        for level in &cfg.curriculum.levels {
            let rows: Vec<_> = run.log.iter().filter(|r| r.level == *level).collect();
            let tail = &rows[rows.len().saturating_sub(20)..];
            let mean = tail.iter().map(|r| r.mean_reward).sum::<f64>() / tail.len() as f64;
            println!("seed {} level {level}: last-20 mean step reward {mean:.3}", run.policy.seed);
        }
        println!("seed {}: {} updates", run.policy.seed, run.updates.len());
        let path = std::env::temp_dir().join(format!("reserve_rl_policy_seed{}.json", run.policy.seed));
        std::fs::write(&path, run.policy.to_json()).map_err(|e| reserve_rl::Error::io(&path, e))?;
        println!("saved {}", path.display());
    }
    Ok(())
}
