//! Zero-shot reward adaptation: regress a reward onto latent displacements,
//! then run the matching skill without further training.

use hilp::dataset::{generate_dataset, Behavior};
use hilp::mdp::{build_chain, RewardFn};
use hilp::oracle::{value_iteration, DEFAULT_VI_TOL};
use hilp::prompting::{goal_from_reward, infer_latent_regression, rollout_zeroshot_rl, Diagnostics, RegressionConfig};
use hilp::repr::{mean_embedding, Embedding};
use hilp::skills::{build_codebook, train_skills, SkillConfig};
use hilp::Result;

pub fn run() -> Result<()> {
    let mdp = build_chain(5)?;
    let data = generate_dataset(&mdp, &Behavior::UniformRandom, 20, 40, 0)?;
    let emb = Embedding::from_points(&(0..5).map(|i| vec![i as f64, 0.0]).collect::<Vec<_>>())?;
    let mean = mean_embedding(&emb, &data)?;
    let codebook = build_codebook(2, 8, 0)?;
    let policy = train_skills(&data, &emb, &mean, &codebook, mdp.n_actions(), &SkillConfig::default())?;

    let gamma = 0.99;
    // r = 1 whenever the next state is 4, including staying there.
    let reward = RewardFn::arrival(&mdp, 4)?;
    let prompt = infer_latent_regression(&data, &emb, &reward, &RegressionConfig::default())?;
    if let Diagnostics::Regression { residual, raw } = &prompt.diagnostics {
        println!("ridge solution {raw:.4?}, residual {residual:.4}");
    }
    println!("prompt latent {:.4?}", prompt.latent);
    let per_state = RewardFn::goal_indicator(&mdp, 4)?;
    println!("goal read off a state reward: {}", goal_from_reward(&data, &per_state)?);

    let oracle = value_iteration(&mdp, &reward, gamma, DEFAULT_VI_TOL)?;
    for start in 0..4 {
        let out = rollout_zeroshot_rl(&mdp, &policy, &reward, gamma, &prompt, &oracle, start, 20)?;
        println!("start {start}: return {:.4}, oracle {:.4}", out.ret, out.oracle_return);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
