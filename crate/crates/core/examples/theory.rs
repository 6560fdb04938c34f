//! Checks the greedy-optimality implication: wherever the local embedding
//! condition holds, the latent-greedy action must step one unit closer to
//! the goal.

use hilp::mdp::build_chain;
use hilp::oracle::temporal_distances;
use hilp::repr::Embedding;
use hilp::theory::check_theorem;
use hilp::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<()> {
    let mdp = build_chain(8)?;
    let dist = temporal_distances(&mdp);
    let exact = Embedding::from_points(&(0..8).map(|i| vec![i as f64, 0.0]).collect::<Vec<_>>())?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut cases = vec![("exact".to_string(), exact.clone())];
    for scale in [0.1, 0.3, 1.0] {
        cases.push((format!("noise {scale}"), exact.map_values(|_, _, v| v + rng.gen_range(-scale..=scale))));
    }
    for (label, emb) in cases {
        let r = check_theorem(&mdp, &emb, &dist)?;
        println!(
            "{label:<10} eps_e={:.3} eps_d={} local={:>2}/{} greedy-optimal={:>2} violations={}",
            r.eps_e_global,
            r.eps_d_global.map_or("n/a".into(), |v| format!("{v:.3}")),
            r.local_condition_pairs,
            r.pairs_checked,
            r.greedy_optimal_pairs,
            r.violations
        );
        r.ensure_no_defects()?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
