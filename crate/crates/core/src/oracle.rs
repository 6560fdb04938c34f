//! Exact ground truth: shortest step counts, optimal goal actions and
//! optimal task values. Every learned quantity is checked against these.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{check_state, Mdp, RewardFn};

/// All-pairs temporal distances `d*(s, g)`; `None` means unreachable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<u32>,
}

const UNREACHABLE: u32 = u32::MAX;

impl DistanceMatrix {
    pub fn n_states(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, s: usize, g: usize) -> Option<u32> {
        let v = self.d[s * self.n + g];
        (v != UNREACHABLE).then_some(v)
    }

    pub fn max_finite(&self) -> u32 {
        self.d
            .iter()
            .copied()
            .filter(|&v| v != UNREACHABLE)
            .max()
            .unwrap_or(0)
    }

    pub fn unreachable_pairs(&self) -> usize {
        self.d.iter().filter(|&&v| v == UNREACHABLE).count()
    }

    /// Row = source state; unreachable entries are written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for s in 0..self.n {
            for g in 0..self.n {
                if g > 0 {
                    out.push(',');
                }
                match self.get(s, g) {
                    Some(v) => write!(out, "{v}").unwrap(),
                    None => out.push_str("inf"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Breadth-first search from every source over the successor graph.
pub fn temporal_distances(mdp: &Mdp) -> DistanceMatrix {
    let n = mdp.n_states();
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|source| {
            let mut row = vec![UNREACHABLE; n];
            row[source] = 0;
            let mut queue = VecDeque::from([source]);
            while let Some(s) = queue.pop_front() {
                for &t in mdp.successors(s) {
                    if row[t] == UNREACHABLE {
                        row[t] = row[s] + 1;
                        queue.push_back(t);
                    }
                }
            }
            row
        })
        .collect();
    DistanceMatrix {
        n,
        d: rows.concat(),
    }
}

/// Floyd–Warshall over unit-weight edges; an independent route to the same
/// matrix as [`temporal_distances`].
pub fn floyd_warshall(mdp: &Mdp) -> DistanceMatrix {
    let n = mdp.n_states();
    let mut d = vec![u64::MAX; n * n];
    for s in 0..n {
        d[s * n + s] = 0;
        for &t in mdp.successors(s) {
            if t != s {
                d[s * n + t] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik == u64::MAX {
                continue;
            }
            for j in 0..n {
                let dkj = d[k * n + j];
                if dkj != u64::MAX && dik + dkj < d[i * n + j] {
                    d[i * n + j] = dik + dkj;
                }
            }
        }
    }
    DistanceMatrix {
        n,
        d: d.into_iter()
            .map(|v| if v == u64::MAX { UNREACHABLE } else { v as u32 })
            .collect(),
    }
}

/// `(1 - gamma^d) / (1 - gamma)`, or `d` itself when `gamma = 1`.
pub fn discounted_distance(d: Option<u32>, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma {gamma} outside (0, 1]"
        )));
    }
    Ok(match d {
        None if gamma == 1.0 => f64::INFINITY,
        None => 1.0 / (1.0 - gamma),
        Some(d) if gamma == 1.0 => d as f64,
        Some(d) => (1.0 - gamma.powi(d as i32)) / (1.0 - gamma),
    })
}

/// Optimal actions toward one goal for every state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalPolicy {
    pub goal: usize,
    actions: Vec<Vec<usize>>,
    /// States from which the goal cannot be reached.
    pub unreachable: Vec<usize>,
}

impl GoalPolicy {
    pub fn actions(&self, s: usize) -> &[usize] {
        &self.actions[s]
    }
}

/// Actions that decrement `d*(., g)`; at `g`, the actions that stay there.
pub fn optimal_goal_policy(mdp: &Mdp, dist: &DistanceMatrix, g: usize) -> GoalPolicy {
    let mut actions = Vec::with_capacity(mdp.n_states());
    let mut unreachable = Vec::new();
    for s in 0..mdp.n_states() {
        let set: Vec<usize> = match dist.get(s, g) {
            None => {
                unreachable.push(s);
                Vec::new()
            }
            Some(0) => (0..mdp.n_actions())
                .filter(|&a| mdp.step(s, a) == g)
                .collect(),
            Some(d) => (0..mdp.n_actions())
                .filter(|&a| dist.get(mdp.step(s, a), g) == Some(d - 1))
                .collect(),
        };
        actions.push(set);
    }
    GoalPolicy {
        goal: g,
        actions,
        unreachable,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleQ {
    pub gamma: f64,
    n_actions: usize,
    q: Vec<f64>,
    /// Sup-norm change of each sweep, in order.
    pub residuals: Vec<f64>,
}

impl OracleQ {
    #[inline]
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn value(&self, s: usize) -> f64 {
        (0..self.n_actions)
            .map(|a| self.q(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        let mut best = 0;
        for a in 1..self.n_actions {
            if self.q(s, a) > self.q(s, best) {
                best = a;
            }
        }
        best
    }

    /// Sup-norm Bellman residual of the stored table.
    pub fn bellman_residual(&self, mdp: &Mdp, reward: &RewardFn) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let next = mdp.step(s, a);
                let target = reward.get(s, a, next) + self.gamma * self.value(next);
                worst = worst.max((target - self.q(s, a)).abs());
            }
        }
        worst
    }
}

pub const DEFAULT_VI_TOL: f64 = 1e-10;

/// Synchronous Bellman optimality iteration to a sup-norm residual of `tol`.
pub fn value_iteration(mdp: &Mdp, reward: &RewardFn, gamma: f64, tol: f64) -> Result<OracleQ> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma {gamma} outside (0, 1)"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol {tol} must be positive")));
    }
    if reward.n_states() != mdp.n_states() {
        return Err(Error::InvalidArgument(
            "reward table does not match the mdp".into(),
        ));
    }
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let mut oracle = OracleQ {
        gamma,
        n_actions: na,
        q: vec![0.0; n * na],
        residuals: Vec::new(),
    };
    let mut values = vec![0.0; n];
    loop {
        let mut change: f64 = 0.0;
        let mut next_q = vec![0.0; n * na];
        for s in 0..n {
            for a in 0..na {
                let t = mdp.step(s, a);
                let v = reward.get(s, a, t) + gamma * values[t];
                change = change.max((v - oracle.q[s * na + a]).abs());
                next_q[s * na + a] = v;
            }
        }
        oracle.q = next_q;
        for (s, v) in values.iter_mut().enumerate() {
            *v = oracle.value(s);
        }
        oracle.residuals.push(change);
        // One more sweep changes q by at most gamma * change.
        if gamma * change <= tol {
            break;
        }
    }
    Ok(oracle)
}

/// Discounted return of a deterministic policy over `horizon` steps.
pub fn oracle_return(
    mdp: &Mdp,
    reward: &RewardFn,
    gamma: f64,
    policy: impl Fn(usize) -> usize,
    start: usize,
    horizon: usize,
) -> Result<f64> {
    check_state(mdp, start)?;
    let mut s = start;
    let mut discount = 1.0;
    let mut total = 0.0;
    for _ in 0..horizon {
        let a = policy(s);
        if a >= mdp.n_actions() {
            return Err(Error::InvalidArgument(format!("action {a} out of range")));
        }
        let next = mdp.step(s, a);
        total += discount * reward.get(s, a, next);
        discount *= gamma;
        s = next;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_chain, build_gridworld, four_rooms_map, LEFT, RIGHT, STAY};

    #[test]
    fn chain_distances() {
        let m = build_chain(5).unwrap();
        let d = temporal_distances(&m);
        assert_eq!(d.get(0, 4), Some(4));
        assert_eq!(d.get(4, 1), Some(3));
        for s in 0..5 {
            assert_eq!(d.get(s, s), Some(0));
        }
        assert_eq!(d.unreachable_pairs(), 0);
    }

    #[test]
    fn four_rooms_corner_to_corner() {
        let m = build_gridworld(&four_rooms_map()).unwrap();
        let layout = m.layout().unwrap();
        let a = layout.state_at(0, 0).unwrap();
        let b = layout.state_at(14, 14).unwrap();
        let bfs = temporal_distances(&m);
        // Every route crosses two doorways; the monotone one is Manhattan length.
        assert_eq!(bfs.get(a, b), Some(28));
        assert_eq!(floyd_warshall(&m).get(a, b), Some(28));
    }

    #[test]
    fn unreachable_pairs_are_infinite() {
        // 0 -> 1 -> 2 -> 2, no way back.
        let m = Mdp::new("line", 3, 1, vec![1, 2, 2], vec![(0, 1.0)]).unwrap();
        let d = temporal_distances(&m);
        assert_eq!(d.get(0, 2), Some(2));
        assert_eq!(d.get(2, 0), None);
        assert_eq!(d.unreachable_pairs(), 3);
        assert_eq!(d, floyd_warshall(&m));
        assert!(d.to_csv().starts_with("0,1,2\ninf,0,1\n"));
        let p = optimal_goal_policy(&m, &d, 0);
        assert_eq!(p.unreachable, vec![1, 2]);
    }

    #[test]
    fn discounted_distance_values() {
        assert_eq!(discounted_distance(Some(0), 0.9).unwrap(), 0.0);
        assert_eq!(discounted_distance(Some(3), 1.0).unwrap(), 3.0);
        assert_eq!(discounted_distance(Some(2), 0.5).unwrap(), 1.5);
        assert_eq!(discounted_distance(None, 0.5).unwrap(), 2.0);
        assert!(discounted_distance(Some(1), 0.0).is_err());
        assert!(discounted_distance(Some(1), 1.5).is_err());
    }

    #[test]
    fn goal_policy_on_chain() {
        let m = build_chain(5).unwrap();
        let d = temporal_distances(&m);
        assert_eq!(optimal_goal_policy(&m, &d, 4).actions(0), &[RIGHT]);
        assert_eq!(optimal_goal_policy(&m, &d, 2).actions(2), &[STAY]);
        // At the clamped end both Left and Stay keep the agent at the goal.
        assert_eq!(optimal_goal_policy(&m, &d, 0).actions(0), &[LEFT, STAY]);
    }

    #[test]
    fn value_iteration_geometric_series() {
        let m = build_chain(5).unwrap();
        let r = RewardFn::goal_indicator(&m, 4).unwrap();
        let q = value_iteration(&m, &r, 0.9, DEFAULT_VI_TOL).unwrap();
        assert!((q.value(0) - 6.561).abs() < 1e-8);
        assert!(q.bellman_residual(&m, &r) <= 1e-9);
        let w = q.residuals.windows(2).all(|w| w[1] <= w[0] + 1e-15);
        assert!(w);

        let zero = value_iteration(&m, &RewardFn::zero(&m), 0.9, 1e-10).unwrap();
        assert!((0..5).all(|s| zero.value(s) == 0.0));

        let scaled = value_iteration(&m, &r.scaled(2.5), 0.9, 1e-10).unwrap();
        for s in 0..5 {
            for a in 0..3 {
                assert!((scaled.q(s, a) - 2.5 * q.q(s, a)).abs() < 1e-8);
            }
        }
        assert!(value_iteration(&m, &r, 1.0, 1e-10).is_err());
        assert!(value_iteration(&m, &r, 0.9, 0.0).is_err());
    }

    #[test]
    fn greedy_return_dominates_every_deterministic_policy() {
        let m = build_chain(5).unwrap();
        let r = RewardFn::goal_indicator(&m, 4).unwrap();
        let gamma = 0.9;
        let horizon = 60;
        let q = value_iteration(&m, &r, gamma, 1e-12).unwrap();
        for start in 0..5 {
            let best = oracle_return(&m, &r, gamma, |s| q.greedy(s), start, horizon).unwrap();
            assert!((best - q.value(start)).abs() <= gamma.powi(horizon as i32) * 10.0 + 1e-9);
            // 3^5 deterministic stationary policies.
            for code in 0..243usize {
                let table: Vec<usize> = (0..5).map(|s| (code / 3usize.pow(s as u32)) % 3).collect();
                let ret = oracle_return(&m, &r, gamma, |s| table[s], start, horizon).unwrap();
                assert!(best >= ret - 1e-12);
            }
        }
    }

    #[test]
    fn zero_reward_return() {
        let m = build_chain(5).unwrap();
        let ret = oracle_return(&m, &RewardFn::zero(&m), 0.9, |_| RIGHT, 0, 10).unwrap();
        assert_eq!(ret, 0.0);
    }
}
