mod common;

use hilp::mdp::{build_chain, build_named_gridworld, open_grid_map};
use hilp::oracle::{floyd_warshall, temporal_distances};
use hilp::prompting::{plan_midpoint, regress_on};
use hilp::repr::{expectile_loss, Embedding};
use hilp::mdp::RewardFn;
use proptest::prelude::*;

#[test]
fn expectile_identities() {
    common::expectile_identities().unwrap();
}

#[test]
fn telescoping_rewards() {
    common::telescoping(0..3).unwrap();
}

#[test]
fn cauchy_schwarz_bound() {
    common::cauchy_schwarz(0..3).unwrap();
}

#[test]
fn prompts_are_unit_norm() {
    common::unit_prompts(0..2).unwrap();
}

#[test]
fn td_gradient_matches_finite_differences() {
    common::finite_differences().unwrap();
}

#[test]
fn bfs_matches_floyd_warshall() {
    common::bfs_equals_floyd_warshall().unwrap();
}

#[test]
fn file_round_trips() {
    common::round_trips().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn expectile_mirror(x in -1e3f64..1e3, k in 1u32..(1 << 20)) {
        let tau = k as f64 / (1u32 << 20) as f64;
        prop_assert_eq!(expectile_loss(x, tau), expectile_loss(-x, 1.0 - tau));
        prop_assert!(expectile_loss(x, tau) >= 0.0);
    }

    #[test]
    fn latent_distance_triangle(points in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 3)) {
        let e = Embedding::from_points(&points).unwrap();
        let (ab, bc, ac) = (e.raw_distance(0, 1), e.raw_distance(1, 2), e.raw_distance(0, 2));
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn random_grids_agree_with_floyd_warshall(w in 1usize..7, h in 1usize..7, walls in prop::collection::vec(any::<bool>(), 36)) {
        let mut map = String::new();
        for r in 0..h {
            for c in 0..w {
                // Keep the top-left cell free so the map is never empty.
                map.push(if (r, c) != (0, 0) && walls[r * 6 + c] { '#' } else { '.' });
            }
            map.push('\n');
        }
        // Disconnected maps are rejected at build time.
        let m = build_named_gridworld("random", &map);
        prop_assume!(m.is_ok());
        let m = m.unwrap();
        prop_assert_eq!(temporal_distances(&m), floyd_warshall(&m));
    }

    #[test]
    fn gradient_check_over_seeds(seed in 0u64..1000, tau in 0.55f64..0.99) {
        prop_assert!(common::gradient_error(seed, 1.0, tau) <= 1e-5);
    }

    #[test]
    fn midpoint_is_minimax(points in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 3..12)) {
        let e = Embedding::from_points(&points).unwrap();
        let n = points.len();
        let candidates: Vec<usize> = (0..n).collect();
        let w = plan_midpoint(&e, &candidates, 0, n - 1).unwrap();
        let cost = |c: usize| e.raw_distance(0, c).max(e.raw_distance(c, n - 1));
        for c in 0..n {
            prop_assert!(cost(w) <= cost(c) + 1e-12);
        }
    }

    /// An exactly linear reward is fit with zero residual and the same
    /// direction at lambda = 0.
    #[test]
    fn exact_linear_reward_regression(u0 in -1.0f64..1.0, u1 in -1.0f64..1.0, scale in 0.1f64..10.0) {
        prop_assume!(u0.abs() + u1.abs() > 0.1);
        let m = build_named_gridworld("grid4x4", &open_grid_map(4, 4)).unwrap();
        let e = Embedding::from_points(&common::grid_points(4, 16)).unwrap();
        let u = [u0, u1];
        let r = RewardFn::from_fn(&m, |s, _, n| scale * (0..2).map(|k| (e.row(n)[k] - e.row(s)[k]) * u[k]).sum::<f64>()).unwrap();
        let samples: Vec<(usize, usize, usize)> = (0..16).flat_map(|s| (0..m.n_actions()).map(move |a| (s, a))).map(|(s, a)| (s, a, m.step(s, a))).collect();
        let p = regress_on(&samples, &e, &r, 0.0).unwrap();
        let norm = (u0 * u0 + u1 * u1).sqrt();
        let z = p.latent.unwrap();
        prop_assert!((z[0] - u0 / norm).abs() < 1e-9 && (z[1] - u1 / norm).abs() < 1e-9);
        if let hilp::prompting::Diagnostics::Regression { residual, .. } = p.diagnostics {
            prop_assert!(residual <= 1e-18 * scale * scale);
        }
    }
}

#[test]
fn chain_distances_are_index_gaps() {
    let d = temporal_distances(&build_chain(9).unwrap());
    for s in 0..9 {
        for g in 0..9 {
            assert_eq!(d.get(s, g), Some((s as i64 - g as i64).unsigned_abs() as u32));
        }
    }
}
