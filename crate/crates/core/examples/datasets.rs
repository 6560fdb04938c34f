//! Behavior datasets, coverage, and the text file format.

use hilp::dataset::{dataset_coverage, generate_dataset, Behavior, Dataset};
use hilp::mdp::{build_named_gridworld, open_grid_map};
use hilp::Result;

pub fn run() -> Result<()> {
    let mdp = build_named_gridworld("grid8x8", &open_grid_map(8, 8))?;
    for spec in ["uniform-random", "epsilon-goal-directed(0.2,63)", "mixture"] {
        let behavior: Behavior = spec.parse()?;
        let data = generate_dataset(&mdp, &behavior, 50, 60, 7)?;
        let cov = dataset_coverage(&data, &mdp)?;
        println!(
            "{spec:<30} transitions={:<5} coverage={:.3} visits(63)={}",
            data.n_transitions(),
            cov.fraction,
            cov.visit_counts[63]
        );
    }

    let data = generate_dataset(&mdp, &Behavior::UniformRandom, 10, 20, 1)?;
    let path = std::env::temp_dir().join(format!("hilp-example-dataset-{}.txt", std::process::id()));
    data.save(&path)?;
    let back = Dataset::load(&path)?;
    std::fs::remove_file(&path).ok();
    assert_eq!(back, data);
    println!("round-tripped {} trajectories through {}", back.trajectories.len(), path.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
