//! Exact temporal distances and value iteration on the four-rooms map.

use hilp::mdp::{build_named_gridworld, four_rooms_map, RewardFn};
use hilp::oracle::{floyd_warshall, optimal_goal_policy, oracle_return, temporal_distances, value_iteration, DEFAULT_VI_TOL};
use hilp::Result;

pub fn run() -> Result<()> {
    let mdp = build_named_gridworld("four-rooms", &four_rooms_map())?;
    println!("{mdp}");
    let bfs = temporal_distances(&mdp);
    assert_eq!(bfs, floyd_warshall(&mdp));
    println!("diameter {} over {} states", bfs.max_finite(), mdp.n_states());

    let (start, goal) = (0, mdp.n_states() - 1);
    let d = bfs.get(start, goal).expect("connected map");
    let policy = optimal_goal_policy(&mdp, &bfs, goal);
    println!("d*({start}, {goal}) = {d}; optimal first actions {:?}", policy.actions(start));

    // Following the optimal policy, the goal is entered after exactly d steps.
    let gamma = 0.99;
    let reward = RewardFn::entering(&mdp, goal)?;
    let ret = oracle_return(&mdp, &reward, gamma, |s| policy.actions(s)[0], start, d as usize)?;
    println!("return over d steps = {ret:.6}, gamma^(d-1) = {:.6}", gamma.powi(d as i32 - 1));
    // Unbounded horizons let the optimal policy step out and re-enter.
    let q = value_iteration(&mdp, &reward, gamma, DEFAULT_VI_TOL)?;
    println!("V*({start}) = {:.4}, first action {}", q.value(start), mdp.action_name(q.greedy(start)));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
