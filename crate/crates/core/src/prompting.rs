//! Zero-shot use of a trained [`SkillPolicy`]: latents from reward
//! regression, from a goal direction, and from midpoint planning.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Trajectory};
use crate::error::{Error, Result};
use crate::mdp::{check_state, Mdp, RewardFn};
use crate::oracle::{oracle_return, OracleQ};
use crate::repr::{dot, norm, sq_dist, Embedding};
use crate::skills::{act, act_entry, SkillPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub n_samples: usize,
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            n_samples: 10_000,
            ridge_lambda: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub n_candidates: usize,
    pub recursions: usize,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            n_candidates: 50_000,
            recursions: 0,
            top_k: 1,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::validation("top_k", "must be >= 1"));
        }
        if self.n_candidates == 0 {
            return Err(Error::validation("n_candidates", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostics {
    Regression {
        /// Mean squared error of the linear fit.
        residual: f64,
        /// Unnormalized ridge solution.
        raw: Vec<f64>,
    },
    Goal,
    Planning {
        /// Midpoints from the outermost recursion inward.
        waypoints: Vec<usize>,
        /// Set when the planned direction collapsed and the goal direction
        /// was used instead.
        fallback: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptResult {
    /// Unit latent, or `None` when the prompt is degenerate.
    pub latent: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl PromptResult {
    pub fn is_degenerate(&self) -> bool {
        self.latent.is_none()
    }
}

fn normalized(v: &[f64], threshold: f64) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > threshold && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`.
pub fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::InvalidArgument("matrix/vector size mismatch".into()));
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Singular("matrix is zero or non-finite".into()));
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if a[pivot * n + col].abs() <= 1e-12 * scale {
            return Err(Error::Singular(format!("zero pivot in column {col}")));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * n + row];
    }
    Ok(x)
}

/// Fits `r(s, a, s') ~ <phi(s') - phi(s), z>` over sampled dataset
/// transitions and returns the normalized ridge solution.
pub fn infer_latent_regression(
    dataset: &Dataset,
    emb: &Embedding,
    reward: &RewardFn,
    config: &RegressionConfig,
) -> Result<PromptResult> {
    let dim = emb.dim();
    if config.n_samples < dim {
        return Err(Error::validation(
            "n_samples",
            format!("must be at least D = {dim}"),
        ));
    }
    if !(config.ridge_lambda >= 0.0) {
        return Err(Error::validation("ridge_lambda", "must be non-negative"));
    }
    let transitions: Vec<(usize, usize, usize)> = dataset.transitions().collect();
    if transitions.is_empty() {
        return Err(Error::InvalidDataset("dataset has no transitions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let samples: Vec<(usize, usize, usize)> = (0..config.n_samples)
        .map(|_| transitions[rng.gen_range(0..transitions.len())])
        .collect();
    regress_on(&samples, emb, reward, config.ridge_lambda)
}

/// Ridge regression of the reward on cumulants over the given transitions.
pub fn regress_on(
    samples: &[(usize, usize, usize)],
    emb: &Embedding,
    reward: &RewardFn,
    lambda: f64,
) -> Result<PromptResult> {
    let dim = emb.dim();
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    let mut features = Vec::with_capacity(samples.len());
    for &(s, act, next) in samples {
        let phi: Vec<f64> = emb.row(next).iter().zip(emb.row(s)).map(|(x, y)| x - y).collect();
        let r = reward.get(s, act, next);
        for i in 0..dim {
            b[i] += r * phi[i];
            for j in 0..dim {
                a[i * dim + j] += phi[i] * phi[j];
            }
        }
        features.push((phi, r));
    }
    let n = samples.len() as f64;
    a.iter_mut().for_each(|v| *v /= n);
    b.iter_mut().for_each(|v| *v /= n);
    for i in 0..dim {
        a[i * dim + i] += lambda;
    }
    let z = solve_linear(a, b).map_err(|e| match e {
        Error::Singular(msg) if lambda == 0.0 => Error::Singular(format!(
            "{msg}; the cumulant covariance is singular, use ridge_lambda > 0"
        )),
        other => other,
    })?;
    let residual = features
        .iter()
        .map(|(phi, r)| {
            let e = r - dot(phi, &z);
            e * e
        })
        .sum::<f64>()
        / n;
    Ok(PromptResult {
        latent: normalized(&z, 1e-12),
        diagnostics: Diagnostics::Regression { residual, raw: z },
    })
}

/// Unit vector from `phi(s)` toward `phi(g)`.
pub fn gc_latent(emb: &Embedding, s: usize, g: usize) -> Result<PromptResult> {
    let diff: Vec<f64> = emb.row(g).iter().zip(emb.row(s)).map(|(a, b)| a - b).collect();
    match normalized(&diff, emb.norm_epsilon) {
        Some(latent) => Ok(PromptResult {
            latent: Some(latent),
            diagnostics: Diagnostics::Goal,
        }),
        None => Err(Error::AtGoal { state: s }),
    }
}

/// Dataset state with the highest reward over its observed transitions;
/// lowest id on ties.
pub fn goal_from_reward(dataset: &Dataset, reward: &RewardFn) -> Result<usize> {
    let mut best: Vec<Option<f64>> = vec![None; reward.n_states()];
    for (s, a, next) in dataset.transitions() {
        if s >= best.len() || next >= best.len() {
            return Err(Error::InvalidDataset(format!("state {s} out of range")));
        }
        let r = reward.get(s, a, next);
        best[s] = Some(best[s].map_or(r, |b| b.max(r)));
    }
    let mut goal: Option<(usize, f64)> = None;
    for (s, value) in best.iter().enumerate() {
        if let Some(v) = *value {
            if goal.is_none_or(|(_, g)| v > g) {
                goal = Some((s, v));
            }
        }
    }
    goal.map(|(s, _)| s)
        .ok_or_else(|| Error::InvalidDataset("dataset has no transitions".into()))
}

/// Candidate waypoints with their embeddings computed once.
#[derive(Debug, Clone)]
pub struct Planner {
    pub config: PlannerConfig,
    candidates: Vec<usize>,
    points: Vec<Vec<f64>>,
}

impl Planner {
    /// All distinct dataset states when there are at most `n_candidates`,
    /// otherwise a seeded subsample without replacement.
    pub fn new(dataset: &Dataset, emb: &Embedding, config: &PlannerConfig) -> Result<Self> {
        config.validate()?;
        let distinct = dataset.distinct_states();
        let mut candidates = if distinct.len() <= config.n_candidates {
            distinct
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            sample_indices(&mut rng, distinct.len(), config.n_candidates)
                .into_iter()
                .map(|i| distinct[i])
                .collect()
        };
        candidates.sort_unstable();
        Self::with_candidates(candidates, emb, config)
    }

    pub fn with_candidates(
        mut candidates: Vec<usize>,
        emb: &Embedding,
        config: &PlannerConfig,
    ) -> Result<Self> {
        config.validate()?;
        candidates.sort_unstable();
        candidates.dedup();
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("no planner candidates".into()));
        }
        if let Some(&c) = candidates.iter().find(|&&c| c >= emb.n_states()) {
            return Err(Error::InvalidArgument(format!("candidate {c} out of range")));
        }
        let points = candidates.iter().map(|&c| emb.row(c).to_vec()).collect();
        Ok(Planner {
            config: config.clone(),
            candidates,
            points,
        })
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    /// Candidates ordered by `max(||phi(s) - phi(w)||, ||phi(w) - phi(u)||)`,
    /// ties by state id; the first `k` are returned.
    fn best_midpoints(&self, from: &[f64], to: &[f64], k: usize) -> Vec<usize> {
        let mut scored: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (sq_dist(from, p).max(sq_dist(p, to)), i))
            .collect();
        if k == 1 {
            let mut best = 0;
            for i in 1..scored.len() {
                if scored[i].0 < scored[best].0 {
                    best = i;
                }
            }
            return vec![scored[best].1];
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.iter().take(k).map(|&(_, i)| i).collect()
    }

    /// Planned latent target for moving from `s` toward `g`: the point to
    /// steer at and the chain of waypoints.
    pub fn target(&self, emb: &Embedding, s: usize, g: usize) -> (Vec<f64>, Vec<usize>) {
        let recursions = self.config.recursions;
        if recursions == 0 {
            return (emb.row(g).to_vec(), Vec::new());
        }
        let from = emb.row(s);
        let mut waypoints = Vec::with_capacity(recursions);
        let mut u = emb.row(g).to_vec();
        for _ in 0..recursions - 1 {
            let w = self.best_midpoints(from, &u, 1)[0];
            waypoints.push(self.candidates[w]);
            u = self.points[w].clone();
        }
        let best = self.best_midpoints(from, &u, self.config.top_k);
        waypoints.push(self.candidates[best[0]]);
        let mut avg = vec![0.0; emb.dim()];
        for &i in &best {
            for (a, v) in avg.iter_mut().zip(&self.points[i]) {
                *a += v;
            }
        }
        avg.iter_mut().for_each(|a| *a /= best.len() as f64);
        (avg, waypoints)
    }
}

/// `argmin_w max(||phi(s) - phi(w)||, ||phi(w) - phi(u)||)` over
/// `candidates`, lowest state id on ties.
pub fn plan_midpoint(emb: &Embedding, candidates: &[usize], s: usize, u: usize) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &w in candidates {
        if w >= emb.n_states() {
            return Err(Error::InvalidArgument(format!("candidate {w} out of range")));
        }
        let value = emb.raw_distance(s, w).max(emb.raw_distance(w, u));
        let better = match best {
            None => true,
            Some((v, id)) => value < v || (value == v && w < id),
        };
        if better {
            best = Some((value, w));
        }
    }
    best.map(|(_, w)| w)
        .ok_or_else(|| Error::InvalidArgument("no planner candidates".into()))
}

/// Applies [`plan_midpoint`] `recursions` times, starting from `u = g`.
pub fn recursive_plan(
    emb: &Embedding,
    candidates: &[usize],
    s: usize,
    g: usize,
    recursions: usize,
) -> Result<usize> {
    let mut u = g;
    for _ in 0..recursions {
        u = plan_midpoint(emb, candidates, s, u)?;
    }
    Ok(u)
}

/// Unit vector from `phi(s)` toward `target`; falls back to the goal
/// direction toward `g` when the two coincide.
pub fn plan_latent(
    emb: &Embedding,
    s: usize,
    target: &[f64],
    g: usize,
    waypoints: Vec<usize>,
) -> Result<PromptResult> {
    let diff: Vec<f64> = target.iter().zip(emb.row(s)).map(|(a, b)| a - b).collect();
    match normalized(&diff, emb.norm_epsilon) {
        Some(latent) => Ok(PromptResult {
            latent: Some(latent),
            diagnostics: Diagnostics::Planning {
                waypoints,
                fallback: false,
            },
        }),
        None => {
            let fallback = gc_latent(emb, s, g)?;
            Ok(PromptResult {
                latent: fallback.latent,
                diagnostics: Diagnostics::Planning {
                    waypoints,
                    fallback: true,
                },
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcrlOutcome {
    pub success: bool,
    /// First-arrival time when successful.
    pub steps: Option<usize>,
    pub trajectory: Trajectory,
    /// Why the rollout stopped early, if it did.
    pub failure: Option<String>,
    /// Steps on which the planner fell back to the goal direction.
    pub fallbacks: usize,
}

/// Goal-reaching rollout that recomputes the prompt latent at every step.
pub fn rollout_gcrl(
    mdp: &Mdp,
    policy: &SkillPolicy,
    emb: &Embedding,
    g: usize,
    start: usize,
    horizon: usize,
    planner: Option<&Planner>,
) -> Result<GcrlOutcome> {
    check_state(mdp, start)?;
    check_state(mdp, g)?;
    let mut traj = Trajectory::single(start);
    let mut s = start;
    let mut fallbacks = 0;
    let mut failure = None;
    for t in 0..=horizon {
        if s == g {
            return Ok(GcrlOutcome {
                success: true,
                steps: Some(t),
                trajectory: traj,
                failure: None,
                fallbacks,
            });
        }
        if t == horizon {
            break;
        }
        let prompt = match planner {
            Some(p) if p.config.recursions > 0 => {
                let (target, waypoints) = p.target(emb, s, g);
                plan_latent(emb, s, &target, g, waypoints)
            }
            _ => gc_latent(emb, s, g),
        };
        let prompt = match prompt {
            Ok(p) => p,
            Err(Error::AtGoal { state }) => {
                failure = Some(format!("latent collapse at state {state}"));
                break;
            }
            Err(e) => return Err(e),
        };
        if let Diagnostics::Planning { fallback: true, .. } = prompt.diagnostics {
            fallbacks += 1;
        }
        let z = prompt.latent.expect("goal prompts are never degenerate");
        let a = match act(policy, s, &z) {
            Ok(a) => a,
            Err(Error::NoAction { state, .. }) => {
                failure = Some(format!("no admissible action at state {state}"));
                break;
            }
            Err(e) => return Err(e),
        };
        s = mdp.step(s, a);
        traj.push(a, s);
    }
    Ok(GcrlOutcome {
        success: false,
        steps: None,
        trajectory: traj,
        failure,
        fallbacks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroShotOutcome {
    pub ret: f64,
    /// Return of the oracle-greedy policy over the same horizon.
    pub oracle_return: f64,
    pub trajectory: Trajectory,
    pub failure: Option<String>,
}

impl ZeroShotOutcome {
    pub fn ratio(&self) -> f64 {
        self.ret / self.oracle_return
    }
}

/// Executes the skill for one fixed prompt latent for `horizon` steps.
#[allow(clippy::too_many_arguments)]
pub fn rollout_zeroshot_rl(
    mdp: &Mdp,
    policy: &SkillPolicy,
    reward: &RewardFn,
    gamma: f64,
    prompt: &PromptResult,
    oracle: &OracleQ,
    start: usize,
    horizon: usize,
) -> Result<ZeroShotOutcome> {
    check_state(mdp, start)?;
    let z = prompt
        .latent
        .as_ref()
        .ok_or_else(|| Error::Degenerate("zero-shot prompt has no direction".into()))?;
    let entry = policy.codebook.project(z)?;
    let mut traj = Trajectory::single(start);
    let mut s = start;
    let mut ret = 0.0;
    let mut discount = 1.0;
    let mut failure = None;
    for _ in 0..horizon {
        let a = match act_entry(policy, s, entry) {
            Ok(a) => a,
            Err(Error::NoAction { state, .. }) => {
                failure = Some(format!("no admissible action at state {state}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let next = mdp.step(s, a);
        ret += discount * reward.get(s, a, next);
        discount *= gamma;
        traj.push(a, next);
        s = next;
    }
    let oracle_ret = oracle_return(mdp, reward, gamma, |s| oracle.greedy(s), start, horizon)?;
    Ok(ZeroShotOutcome {
        ret,
        oracle_return: oracle_ret,
        trajectory: traj,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, Behavior};
    use crate::mdp::build_chain;
    use crate::oracle::value_iteration;
    use crate::repr::mean_embedding;
    use crate::skills::{build_codebook, train_skills, SkillConfig};

    fn line(n: usize) -> Embedding {
        Embedding::from_points(&(0..n).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn gaussian_elimination() {
        let x = solve_linear(vec![0.0, 2.0, 1.0, 1.0], vec![4.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
        assert!(matches!(
            solve_linear(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn zero_reward_is_degenerate() {
        let m = build_chain(5).unwrap();
        let d = generate_dataset(&m, &Behavior::UniformRandom, 5, 20, 0).unwrap();
        let e = Embedding::random(5, 2, 0).unwrap();
        let p = infer_latent_regression(&d, &e, &RewardFn::zero(&m), &RegressionConfig::default())
            .unwrap();
        assert!(p.is_degenerate());
        match p.diagnostics {
            Diagnostics::Regression { raw, .. } => assert!(raw.iter().all(|&v| v == 0.0)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn singular_without_ridge() {
        let m = build_chain(5).unwrap();
        let d = generate_dataset(&m, &Behavior::UniformRandom, 5, 20, 0).unwrap();
        let e = Embedding::from_points(&(0..5).map(|i| vec![i as f64, 0.0]).collect::<Vec<_>>())
            .unwrap();
        let r = RewardFn::entering(&m, 4).unwrap();
        let cfg = RegressionConfig {
            ridge_lambda: 0.0,
            ..RegressionConfig::default()
        };
        let err = infer_latent_regression(&d, &e, &r, &cfg).unwrap_err();
        assert!(err.to_string().contains("ridge_lambda > 0"));
    }

    #[test]
    fn goal_latents() {
        let e = Embedding::from_points(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(gc_latent(&e, 0, 1).unwrap().latent.unwrap(), vec![0.6, 0.8]);
        assert_eq!(gc_latent(&e, 2, 0).unwrap().latent.unwrap(), vec![-1.0, 0.0]);
        assert!(matches!(gc_latent(&e, 1, 1), Err(Error::AtGoal { state: 1 })));
    }

    #[test]
    fn goal_from_reward_rules() {
        let m = build_chain(8).unwrap();
        let d = generate_dataset(&m, &Behavior::UniformRandom, 10, 50, 0).unwrap();
        let r = RewardFn::goal_indicator(&m, 4).unwrap();
        assert_eq!(goal_from_reward(&d, &r).unwrap(), 4);
        let flat = RewardFn::from_fn(&m, |_, _, _| 0.3).unwrap();
        assert_eq!(goal_from_reward(&d, &flat).unwrap(), 0);
        let mut values = vec![0.0; 8];
        values[3] = 0.5;
        values[7] = 0.9;
        let peaks = RewardFn::from_state_values(&m, &values).unwrap();
        assert_eq!(goal_from_reward(&d, &peaks).unwrap(), 7);
    }

    #[test]
    fn midpoints() {
        let e = line(9);
        assert_eq!(plan_midpoint(&e, &[0, 2, 4], 0, 4).unwrap(), 2);
        assert_eq!(plan_midpoint(&e, &[4], 0, 4).unwrap(), 4);
        assert_eq!(plan_midpoint(&e, &[0, 1, 2, 3, 4], 0, 4).unwrap(), 2);
        let all: Vec<usize> = (0..9).collect();
        assert_eq!(recursive_plan(&e, &all, 0, 8, 0).unwrap(), 8);
        assert_eq!(recursive_plan(&e, &all, 0, 8, 1).unwrap(), 4);
        assert_eq!(recursive_plan(&e, &all, 0, 8, 2).unwrap(), 2);
        // 1 and 3 tie for (0, 4) with candidates {1, 3}: lowest id wins.
        assert_eq!(plan_midpoint(&e, &[3, 1], 0, 4).unwrap(), 1);
    }

    #[test]
    fn planner_matches_recursive_plan() {
        let e = line(9);
        for r in 1..4 {
            let cfg = PlannerConfig {
                recursions: r,
                ..PlannerConfig::default()
            };
            let planner = Planner::with_candidates((0..9).collect(), &e, &cfg).unwrap();
            let (target, waypoints) = planner.target(&e, 0, 8);
            let expected = recursive_plan(&e, planner.candidates(), 0, 8, r).unwrap();
            assert_eq!(*waypoints.last().unwrap(), expected);
            assert_eq!(target, e.row(expected));
        }
    }

    #[test]
    fn plan_latent_cases() {
        let e = Embedding::from_points(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = plan_latent(&e, 0, e.row(1), 2, vec![1]).unwrap();
        assert_eq!(p.latent.unwrap(), vec![1.0, 0.0]);
        let avg = [0.5, 0.5];
        let p = plan_latent(&e, 0, &avg, 2, vec![1, 2]).unwrap();
        let l = p.latent.unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((l[0] - h).abs() < 1e-15 && (l[1] - h).abs() < 1e-15);
        let p = plan_latent(&e, 0, e.row(0), 2, vec![0]).unwrap();
        assert_eq!(p.latent.unwrap(), vec![0.0, 1.0]);
        assert!(matches!(
            p.diagnostics,
            Diagnostics::Planning { fallback: true, .. }
        ));
    }

    #[test]
    fn top_k_averages_best_candidates() {
        let e = Embedding::from_points(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![5.0, 5.0],
        ])
        .unwrap();
        let cfg = PlannerConfig {
            recursions: 1,
            top_k: 2,
            ..PlannerConfig::default()
        };
        let planner = Planner::with_candidates(vec![1, 2, 4], &e, &cfg).unwrap();
        let (target, _) = planner.target(&e, 0, 3);
        assert_eq!(target, vec![0.5, 0.5]);
    }

    #[test]
    fn chain_gcrl_is_optimal() {
        let m = build_chain(5).unwrap();
        let d = generate_dataset(&m, &Behavior::UniformRandom, 20, 40, 0).unwrap();
        let e = Embedding::from_points(&(0..5).map(|i| vec![i as f64, 0.0]).collect::<Vec<_>>())
            .unwrap();
        let mean = mean_embedding(&e, &d).unwrap();
        let c = build_codebook(2, 8, 0).unwrap();
        let p = train_skills(&d, &e, &mean, &c, 3, &SkillConfig::default()).unwrap();
        let out = rollout_gcrl(&m, &p, &e, 4, 0, 10, None).unwrap();
        assert!(out.success);
        assert_eq!(out.steps, Some(4));
        let here = rollout_gcrl(&m, &p, &e, 2, 2, 10, None).unwrap();
        assert_eq!(here.steps, Some(0));

        // Linear in the embedding: only the ridge term leaves a residual.
        let r = RewardFn::from_fn(&m, |s, _, next| next as f64 - s as f64).unwrap();
        let prompt = infer_latent_regression(&d, &e, &r, &RegressionConfig::default()).unwrap();
        let z = prompt.latent.clone().unwrap();
        assert!(z[0] > 0.0 && z[1].abs() < 1e-9);
        match &prompt.diagnostics {
            Diagnostics::Regression { residual, .. } => assert!(*residual < 1e-10),
            _ => unreachable!(),
        }
        let oracle = value_iteration(&m, &r, 0.99, 1e-10).unwrap();
        let out = rollout_zeroshot_rl(&m, &p, &r, 0.99, &prompt, &oracle, 0, 50).unwrap();
        assert!((out.ratio() - 1.0).abs() < 1e-12);
    }
}
