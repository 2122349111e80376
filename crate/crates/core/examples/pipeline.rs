//! The full command pipeline on a small profile, written to a temporary
//! directory: ingest, train, evaluate, stress, baselines, report.

use reserve_rl::cli;
use reserve_rl::config::RunConfig;

fn main() -> reserve_rl::Result<()> {
    let out = std::env::temp_dir().join("reserve_rl_pipeline");
    let text = format!(
        "triangle = \"data/workers_comp.csv\"\nout_dir = {:?}\nseeds = [0, 1]\n\
         [curriculum]\nepisodes_per_level = 100\nramp_episodes = 25\n\
         [ppo]\nbatch_size = 250\nminibatch_size = 125\n[eval]\nepisodes = 40\n",
        out
    );
    let cfg = RunConfig::from_toml_str(&text, ".".as_ref())?;
    cfg.validate()?;

    let steps: [(&str, fn(&RunConfig) -> reserve_rl::Result<_>); 6] = [
        ("ingest", cli::cmd_ingest),
        ("train", cli::cmd_train),
        ("evaluate", cli::cmd_evaluate),
        ("stress", cli::cmd_stress),
        ("baselines", cli::cmd_baselines),
        ("report", cli::cmd_report),
    ];
    for (name, cmd) in steps {
        let m = cmd(&cfg)?;
        println!("{name}: {} outputs, fingerprint {}", m.outputs.len(), &m.config_fingerprint[..12]);
    }
    let summary = out.join(cli::REPORTS_DIR).join("summary.md");
    print!("{}", std::fs::read_to_string(&summary).map_err(|e| reserve_rl::Error::io(&summary, e))?);
    Ok(())
}
