//! Goal prompting with and without midpoint planning: the skill for the
//! direction toward the goal (or toward a planned waypoint) is recomputed at
//! every step.

use hilp::dataset::{generate_dataset, Behavior};
use hilp::mdp::{build_named_gridworld, open_grid_map};
use hilp::oracle::temporal_distances;
use hilp::prompting::{recursive_plan, rollout_gcrl, Planner, PlannerConfig};
use hilp::repr::{mean_embedding, Embedding};
use hilp::skills::{build_codebook, train_skills, SkillConfig};
use hilp::Result;

pub fn run() -> Result<()> {
    let mdp = build_named_gridworld("grid8x8", &open_grid_map(8, 8))?;
    let data = generate_dataset(&mdp, &Behavior::UniformRandom, 100, 100, 0)?;
    let points: Vec<Vec<f64>> = (0..64).map(|s| vec![(s % 8) as f64, (s / 8) as f64]).collect();
    let emb = Embedding::from_points(&points)?;
    let mean = mean_embedding(&emb, &data)?;
    let codebook = build_codebook(2, 16, 0)?;
    let policy = train_skills(&data, &emb, &mean, &codebook, mdp.n_actions(), &SkillConfig::default())?;
    let dist = temporal_distances(&mdp);

    let planner = Planner::new(&data, &emb, &PlannerConfig { recursions: 2, ..PlannerConfig::default() })?;
    println!("waypoint from 0 toward 63 after 2 recursions: {}", recursive_plan(&emb, planner.candidates(), 0, 63, 2)?);

    for (label, p) in [("goal", None), ("plan", Some(&planner))] {
        let (mut hits, mut total) = (0, 0);
        for s in 0..64 {
            for g in (0..64).filter(|&g| g != s) {
                let budget = 2 * dist.get(s, g).unwrap() as usize;
                hits += rollout_gcrl(&mdp, &policy, &emb, g, s, budget, p)?.success as usize;
                total += 1;
            }
        }
        println!("{label}: {hits}/{total} pairs reached within 2 d*");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
