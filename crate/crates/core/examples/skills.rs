//! Trains one skill per codebook direction and checks that each skill moves
//! along its direction in latent space.

use hilp::dataset::{generate_dataset, Behavior};
use hilp::mdp::{build_named_gridworld, open_grid_map};
use hilp::repr::{mean_embedding, Embedding};
use hilp::skills::{build_codebook, skill_rollout, train_skills, SkillConfig};
use hilp::Result;

pub fn run() -> Result<()> {
    let mdp = build_named_gridworld("grid6x6", &open_grid_map(6, 6))?;
    let data = generate_dataset(&mdp, &Behavior::UniformRandom, 40, 60, 3)?;
    // Exact Manhattan-grid coordinates stand in for a trained embedding.
    let points: Vec<Vec<f64>> = (0..36).map(|s| vec![(s % 6) as f64, (s / 6) as f64]).collect();
    let emb = Embedding::from_points(&points)?;
    let mean = mean_embedding(&emb, &data)?;

    let config = SkillConfig {
        codebook_size: 8,
        ..SkillConfig::default()
    };
    let codebook = build_codebook(2, config.codebook_size, config.codebook_seed)?;
    let policy = train_skills(&data, &emb, &mean, &codebook, mdp.n_actions(), &config)?;
    let worst = policy.residuals.iter().cloned().fold(0.0, f64::max);
    println!("{} skills, max backup residual {worst:.1e}", codebook.len());

    for (i, z) in codebook.vectors().iter().enumerate() {
        let out = skill_rollout(&mdp, &policy, &emb, z, 14, 6)?;
        println!(
            "z{i} = ({:+.2}, {:+.2}) -> end state {:>2}, displacement {:+.2}",
            z[0],
            z[1],
            out.trajectory.last_state(),
            out.displacement
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
