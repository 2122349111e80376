//! Over-dispersed Poisson bootstrap of the chain-ladder reserve.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reserve_rl::baselines::{bootstrap_chain_ladder, chain_ladder_ultimates};
use reserve_rl::cli::read_triangle;
use reserve_rl::triangles::age_to_age_factors;

fn main() -> reserve_rl::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/workers_comp.csv".into());
    let tri = read_triangle(path.as_ref())?;
    let det = chain_ladder_ultimates(&tri, &age_to_age_factors(&tri)?)?.total_reserve();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let boot = bootstrap_chain_ladder(&tri, 2000, &mut rng)?;
    println!("deterministic reserve {det:.1}");
    println!("bootstrap mean {:.1}  sd {:.1}  phi {:.3}", boot.mean, boot.stddev, boot.phi);
    for (q, v) in &boot.quantiles {
        println!("  q{:<5} {v:.1}", q);
    }
    Ok(())
}
