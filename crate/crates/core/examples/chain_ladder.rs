//! Chain-ladder and Bornhuetter-Ferguson reserves for a small triangle.

use reserve_rl::baselines::{aggregate_loss_ratio, bornhuetter_ferguson, chain_ladder_ultimates, estimates_to_csv};
use reserve_rl::cli::read_triangle;
use reserve_rl::triangles::age_to_age_factors;

fn main() -> reserve_rl::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/textbook.csv".into());
    let tri = read_triangle(path.as_ref())?;
    let f = age_to_age_factors(&tri)?;
    println!("factors {:?}", f.as_slice());

    let clm = chain_ladder_ultimates(&tri, &f)?;
    let elr = aggregate_loss_ratio(&tri, &f)?;
    let bfm = bornhuetter_ferguson(&tri, &f, elr)?;
    print!("{}", estimates_to_csv(&[clm.clone(), bfm.clone()]));
    println!("total reserve: chain-ladder {:.2}, BF (ELR {elr:.3}) {:.2}", clm.total_reserve(), bfm.total_reserve());
    Ok(())
}
