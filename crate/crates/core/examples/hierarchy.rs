//! A high-level policy over codebook skills, trained on k-step dataset
//! segments, compared with flat goal prompting on a long corridor.

use hilp::dataset::{generate_dataset, Behavior};
use hilp::hierarchy::{hierarchical_rollout, relabel_high_level, train_high_level, trajectory_return, HighLevelConfig};
use hilp::mdp::{build_chain, RewardFn};
use hilp::prompting::rollout_gcrl;
use hilp::repr::{mean_embedding, Embedding};
use hilp::skills::{build_codebook, train_skills, SkillConfig};
use hilp::Result;

pub fn run() -> Result<()> {
    let n = 24;
    let mdp = build_chain(n)?;
    let data = generate_dataset(&mdp, &Behavior::UniformRandom, 60, 80, 0)?;
    let emb = Embedding::from_points(&(0..n).map(|i| vec![i as f64, 0.0]).collect::<Vec<_>>())?;
    let mean = mean_embedding(&emb, &data)?;
    let codebook = build_codebook(2, 8, 0)?;
    let low = train_skills(&data, &emb, &mean, &codebook, mdp.n_actions(), &SkillConfig::default())?;

    let goal = n - 1;
    let config = HighLevelConfig { k: 4, ..HighLevelConfig::default() };
    let reward = RewardFn::entering(&mdp, goal)?;
    let relabel = relabel_high_level(&data, &emb, &codebook, config.k, &reward, config.gamma, Some(goal))?;
    let high = train_high_level(&relabel.tuples, n, codebook.len(), &config)?;
    println!("{} segments ({} degenerate), residual {:.1e}", relabel.tuples.len(), relabel.degenerate, high.residual);

    for start in [0, 8, 16] {
        let h = hierarchical_rollout(&mdp, &high, &low, config.k, &reward, config.gamma, start, 100, Some(goal))?;
        let flat = rollout_gcrl(&mdp, &low, &emb, goal, start, 100, None)?;
        println!(
            "start {start:>2}: hierarchical return {:.4} (reached at {:?}, skills {:?}), flat {:.4}",
            h.ret,
            h.reached,
            h.choices,
            trajectory_return(&flat.trajectory, &reward, config.gamma)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
