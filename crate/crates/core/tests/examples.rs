#[path = "../examples/distances.rs"]
mod ex_distances;
#[path = "../examples/datasets.rs"]
mod ex_datasets;
#[path = "../examples/train_embedding.rs"]
mod ex_train_embedding;
#[path = "../examples/skills.rs"]
mod ex_skills;
#[path = "../examples/zero_shot.rs"]
mod ex_zero_shot;
#[path = "../examples/goal_reaching.rs"]
mod ex_goal_reaching;
#[path = "../examples/theory.rs"]
mod ex_theory;
#[path = "../examples/hierarchy.rs"]
mod ex_hierarchy;
#[path = "../examples/experiment.rs"]
mod ex_experiment;

#[test]
fn distances_example_runs() {
    ex_distances::run().unwrap();
}

#[test]
fn datasets_example_runs() {
    ex_datasets::run().unwrap();
}

#[test]
fn train_embedding_example_runs() {
    ex_train_embedding::run().unwrap();
}

#[test]
fn skills_example_runs() {
    ex_skills::run().unwrap();
}

#[test]
fn zero_shot_example_runs() {
    ex_zero_shot::run().unwrap();
}

#[test]
fn goal_reaching_example_runs() {
    ex_goal_reaching::run().unwrap();
}

#[test]
fn theory_example_runs() {
    ex_theory::run().unwrap();
}

#[test]
fn hierarchy_example_runs() {
    ex_hierarchy::run().unwrap();
}

#[test]
fn experiment_example_runs() {
    ex_experiment::run().unwrap();
}
