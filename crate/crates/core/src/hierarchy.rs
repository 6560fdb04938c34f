//! A high-level policy over codebook skills, trained on `k`-step dataset
//! segments with semi-Markov backups.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{parse_header, Dataset, Trajectory};
use crate::error::{Error, Result};
use crate::mdp::{check_state, Mdp, RewardFn};
use crate::prompting::gc_latent;
use crate::repr::{norm, Embedding};
use crate::skills::{act_entry, kv_usize, parse_kv, LatentCodebook, SkillPolicy};

/// One relabeled segment `s_t -> s_{t+steps}` labeled with a codebook entry.
#[derive(Debug, Clone, PartialEq)]
pub struct HighTuple {
    pub s: usize,
    pub z: usize,
    /// `sum_{i < steps} gamma^i r_{t+i}`
    pub reward: f64,
    pub next: usize,
    /// `k`, or fewer when the segment ends on the terminal goal.
    pub steps: usize,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighRelabel {
    pub tuples: Vec<HighTuple>,
    /// Segments whose latent displacement vanished.
    pub degenerate: usize,
    /// Segments starting on the terminal goal.
    pub at_terminal: usize,
}

/// Cuts every trajectory into overlapping `k`-step windows and labels each
/// with the codebook projection of `phi(s_{t+k}) - phi(s_t)`.
///
/// With a `terminal` goal, windows stop on entering it and no window starts
/// there.
#[allow(clippy::too_many_arguments)]
pub fn relabel_high_level(
    dataset: &Dataset,
    emb: &Embedding,
    codebook: &LatentCodebook,
    k: usize,
    reward: &RewardFn,
    gamma: f64,
    terminal: Option<usize>,
) -> Result<HighRelabel> {
    if k == 0 {
        return Err(Error::validation("k", "must be >= 1"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::validation("gamma", "must lie in (0, 1]"));
    }
    if codebook.dim() != emb.dim() {
        return Err(Error::InvalidArgument("codebook and embedding dimensions differ".into()));
    }
    let mut out = HighRelabel {
        tuples: Vec::new(),
        degenerate: 0,
        at_terminal: 0,
    };
    for traj in &dataset.trajectories {
        if traj.states.iter().any(|&s| s >= emb.n_states()) {
            return Err(Error::InvalidDataset("state out of embedding range".into()));
        }
        let len = traj.len();
        if len < k {
            continue;
        }
        for t in 0..=len - k {
            let s = traj.states[t];
            if terminal == Some(s) {
                out.at_terminal += 1;
                continue;
            }
            let mut ret = 0.0;
            let mut discount = 1.0;
            let mut steps = k;
            let mut ended = false;
            for i in 0..k {
                let (from, a, to) = (traj.states[t + i], traj.actions[t + i], traj.states[t + i + 1]);
                ret += discount * reward.get(from, a, to);
                discount *= gamma;
                if terminal == Some(to) {
                    steps = i + 1;
                    ended = true;
                    break;
                }
            }
            let next = traj.states[t + steps];
            let disp: Vec<f64> = emb.row(next).iter().zip(emb.row(s)).map(|(a, b)| a - b).collect();
            if norm(&disp) <= emb.norm_epsilon {
                out.degenerate += 1;
                continue;
            }
            out.tuples.push(HighTuple {
                s,
                z: codebook.project(&disp)?,
                reward: ret,
                next,
                steps,
                terminal: ended,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighLevelConfig {
    pub k: usize,
    pub gamma: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for HighLevelConfig {
    fn default() -> Self {
        HighLevelConfig {
            k: 10,
            gamma: 0.99,
            tol: 1e-8,
            max_sweeps: 200_000,
        }
    }
}

impl HighLevelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::validation("k", "must be >= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::validation("gamma", "must lie in (0, 1)"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::validation("tol", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelPolicy {
    pub n_states: usize,
    pub codebook_len: usize,
    pub k: usize,
    pub gamma: f64,
    /// `q[s * M + z]`; meaningful only where `observed` is set.
    pub q: Vec<f64>,
    pub observed: Vec<bool>,
    pub residual: f64,
}

impl HighLevelPolicy {
    pub fn q(&self, s: usize, z: usize) -> f64 {
        self.q[s * self.codebook_len + z]
    }

    pub fn is_observed(&self, s: usize, z: usize) -> bool {
        self.observed[s * self.codebook_len + z]
    }

    /// Best observed entry at `s`, lowest index on ties.
    pub fn greedy(&self, s: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for z in 0..self.codebook_len {
            if self.is_observed(s, z) && best.is_none_or(|(_, b)| self.q(s, z) > b) {
                best = Some((z, self.q(s, z)));
            }
        }
        best.map(|(z, _)| z)
    }

    pub fn value(&self, s: usize) -> Option<f64> {
        self.greedy(s).map(|z| self.q(s, z))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Header, then `s=<s> z=<z> q=<float>` for every observed pair.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#hilp-highlevel v1 M={} states={} k={} gamma={}\n",
            self.codebook_len, self.n_states, self.k, self.gamma
        );
        for s in 0..self.n_states {
            for z in 0..self.codebook_len {
                if self.is_observed(s, z) {
                    writeln!(out, "s={s} z={z} q={}", self.q(s, z)).unwrap();
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hno, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty high-level policy file"))?;
        let fields = parse_header(header, "#hilp-highlevel", hno + 1)?;
        let (m, n, k) = (
            kv_usize(&fields, "M", hno + 1)?,
            kv_usize(&fields, "states", hno + 1)?,
            kv_usize(&fields, "k", hno + 1)?,
        );
        let gamma: f64 = fields
            .iter()
            .find(|(key, _)| *key == "gamma")
            .and_then(|(_, v)| v.parse().ok())
            .ok_or_else(|| Error::parse(hno + 1, "missing or bad gamma="))?;
        let mut q = vec![0.0; n * m];
        let mut observed = vec![false; n * m];
        for (idx, line) in lines {
            let kv = parse_kv(line, idx + 1)?;
            let (s, z) = (kv_usize(&kv, "s", idx + 1)?, kv_usize(&kv, "z", idx + 1)?);
            let value: f64 = kv
                .iter()
                .find(|(key, _)| *key == "q")
                .and_then(|(_, v)| v.parse().ok())
                .ok_or_else(|| Error::parse(idx + 1, "missing or bad q="))?;
            if s >= n || z >= m {
                return Err(Error::parse(idx + 1, "entry out of range"));
            }
            q[s * m + z] = value;
            observed[s * m + z] = true;
        }
        Ok(HighLevelPolicy {
            n_states: n,
            codebook_len: m,
            k,
            gamma,
            q,
            observed,
            residual: 0.0,
        })
    }
}

/// Semi-Markov Q iteration over the relabeled segments:
/// `q(s, z) = mean over tuples of R + gamma^steps max_{z' observed at s'} q(s', z')`.
pub fn train_high_level(
    tuples: &[HighTuple],
    n_states: usize,
    codebook_len: usize,
    config: &HighLevelConfig,
) -> Result<HighLevelPolicy> {
    config.validate()?;
    if tuples.is_empty() {
        return Err(Error::InvalidDataset("no high-level tuples".into()));
    }
    let m = codebook_len;
    let mut groups: BTreeMap<(usize, usize), Vec<&HighTuple>> = BTreeMap::new();
    for t in tuples {
        if t.s >= n_states || t.next >= n_states || t.z >= m {
            return Err(Error::InvalidArgument(format!(
                "tuple ({}, {}, {}) out of range",
                t.s, t.z, t.next
            )));
        }
        groups.entry((t.s, t.z)).or_default().push(t);
    }
    let mut observed = vec![false; n_states * m];
    for &(s, z) in groups.keys() {
        observed[s * m + z] = true;
    }
    let mut q = vec![0.0; n_states * m];
    let value = |q: &[f64], s: usize| -> f64 {
        let v = (0..m)
            .filter(|&z| observed[s * m + z])
            .map(|z| q[s * m + z])
            .fold(f64::NEG_INFINITY, f64::max);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let backup = |q: &[f64], group: &[&HighTuple]| -> f64 {
        group
            .iter()
            .map(|t| {
                if t.terminal {
                    t.reward
                } else {
                    t.reward + config.gamma.powi(t.steps as i32) * value(q, t.next)
                }
            })
            .sum::<f64>()
            / group.len() as f64
    };
    let mut residual = f64::INFINITY;
    for sweep in 0..config.max_sweeps {
        let mut change: f64 = 0.0;
        for (&(s, z), group) in &groups {
            let updated = backup(&q, group);
            change = change.max((updated - q[s * m + z]).abs());
            q[s * m + z] = updated;
        }
        if !change.is_finite() {
            return Err(Error::NonFinite("high-level backup diverged".into()));
        }
        if change <= config.tol || sweep + 1 == config.max_sweeps {
            residual = groups
                .iter()
                .map(|(&(s, z), group)| (backup(&q, group) - q[s * m + z]).abs())
                .fold(0.0, f64::max);
            if residual <= config.tol {
                break;
            }
        }
    }
    if residual > config.tol {
        return Err(Error::NonFinite(format!(
            "high-level residual {residual} above tolerance {}",
            config.tol
        )));
    }
    Ok(HighLevelPolicy {
        n_states,
        codebook_len: m,
        k: config.k,
        gamma: config.gamma,
        q,
        observed,
        residual,
    })
}

/// Picks a codebook entry at the start of every high-level step.
pub trait HighLevelChooser {
    fn choose(&self, s: usize) -> Result<usize>;
}

impl HighLevelChooser for HighLevelPolicy {
    fn choose(&self, s: usize) -> Result<usize> {
        if s >= self.n_states {
            return Err(Error::InvalidArgument(format!("state {s} out of range")));
        }
        self.greedy(s).ok_or(Error::NoAction {
            state: s,
            partial: None,
        })
    }
}

/// Always picks the codebook projection of the goal direction.
pub struct GoalDirected<'a> {
    pub emb: &'a Embedding,
    pub codebook: &'a LatentCodebook,
    pub goal: usize,
}

impl HighLevelChooser for GoalDirected<'_> {
    fn choose(&self, s: usize) -> Result<usize> {
        let prompt = gc_latent(self.emb, s, self.goal)?;
        self.codebook
            .project(prompt.latent.as_ref().expect("goal prompts are never degenerate"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalOutcome {
    pub ret: f64,
    pub trajectory: Trajectory,
    /// Codebook entry chosen at each high-level step.
    pub choices: Vec<usize>,
    /// Step at which the terminal goal was entered.
    pub reached: Option<usize>,
    pub failure: Option<String>,
}

/// Every `k` steps asks `chooser` for a skill and runs it for `k` steps
/// (fewer at the horizon). Stops on entering `terminal`.
#[allow(clippy::too_many_arguments)]
pub fn hierarchical_rollout(
    mdp: &Mdp,
    chooser: &impl HighLevelChooser,
    low: &SkillPolicy,
    k: usize,
    reward: &RewardFn,
    gamma: f64,
    start: usize,
    horizon: usize,
    terminal: Option<usize>,
) -> Result<HierarchicalOutcome> {
    if k == 0 {
        return Err(Error::validation("k", "must be >= 1"));
    }
    check_state(mdp, start)?;
    let mut out = HierarchicalOutcome {
        ret: 0.0,
        trajectory: Trajectory::single(start),
        choices: Vec::new(),
        reached: (terminal == Some(start)).then_some(0),
        failure: None,
    };
    if out.reached.is_some() {
        return Ok(out);
    }
    let mut s = start;
    let mut t = 0;
    let mut discount = 1.0;
    'outer: while t < horizon {
        let z = match chooser.choose(s) {
            Ok(z) => z,
            Err(Error::NoAction { state, .. }) => {
                out.failure = Some(format!("no high-level action at state {state}"));
                break;
            }
            Err(Error::AtGoal { state }) => {
                out.failure = Some(format!("latent collapse at state {state}"));
                break;
            }
            Err(e) => return Err(e),
        };
        out.choices.push(z);
        for _ in 0..k.min(horizon - t) {
            let a = match act_entry(low, s, z) {
                Ok(a) => a,
                Err(Error::NoAction { state, .. }) => {
                    out.failure = Some(format!("no admissible action at state {state}"));
                    break 'outer;
                }
                Err(e) => return Err(e),
            };
            let next = mdp.step(s, a);
            out.ret += discount * reward.get(s, a, next);
            discount *= gamma;
            out.trajectory.push(a, next);
            s = next;
            t += 1;
            if terminal == Some(s) {
                out.reached = Some(t);
                break 'outer;
            }
        }
    }
    Ok(out)
}

/// `sum_t gamma^t r(s_t, a_t, s_{t+1})` along a trajectory.
pub fn trajectory_return(traj: &Trajectory, reward: &RewardFn, gamma: f64) -> f64 {
    let mut ret = 0.0;
    let mut discount = 1.0;
    for (s, a, next) in traj.transitions() {
        ret += discount * reward.get(s, a, next);
        discount *= gamma;
    }
    ret
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, Behavior};
    use crate::mdp::{build_chain, RIGHT};
    use crate::prompting::rollout_gcrl;
    use crate::repr::mean_embedding;
    use crate::skills::{
        build_codebook, constrained_q_iteration, train_skills, SkillConfig, TransitionTable,
    };

    fn chain_phi(n: usize) -> Embedding {
        Embedding::from_points(&(0..n).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap()
    }

    fn pm() -> LatentCodebook {
        LatentCodebook::from_vectors(vec![vec![1.0], vec![-1.0]]).unwrap()
    }

    #[test]
    fn stuck_trajectory_is_all_degenerate() {
        let m = build_chain(4).unwrap();
        let traj = Trajectory::new(vec![2; 6], vec![crate::mdp::STAY; 5]).unwrap();
        let d = Dataset::new(vec![traj], m.name(), 0, "manual").unwrap();
        let r = relabel_high_level(&d, &chain_phi(4), &pm(), 2, &RewardFn::zero(&m), 0.9, None)
            .unwrap();
        assert!(r.tuples.is_empty());
        assert_eq!(r.degenerate, 4);
    }

    #[test]
    fn rightward_segment_projects_positive() {
        let m = build_chain(6).unwrap();
        let traj = Trajectory::new((0..6).collect(), vec![RIGHT; 5]).unwrap();
        let d = Dataset::new(vec![traj], m.name(), 0, "manual").unwrap();
        let r = relabel_high_level(&d, &chain_phi(6), &pm(), 5, &RewardFn::zero(&m), 0.9, None)
            .unwrap();
        assert_eq!(r.tuples.len(), 1);
        assert_eq!((r.tuples[0].s, r.tuples[0].z, r.tuples[0].next), (0, 0, 5));
    }

    #[test]
    fn terminal_windows_stop_at_goal() {
        let m = build_chain(6).unwrap();
        let traj = Trajectory::new((0..6).collect(), vec![RIGHT; 5]).unwrap();
        let d = Dataset::new(vec![traj], m.name(), 0, "manual").unwrap();
        let r = RewardFn::entering(&m, 3).unwrap();
        let out = relabel_high_level(&d, &chain_phi(6), &pm(), 4, &r, 0.5, Some(3)).unwrap();
        // windows start at 0 and 1; both end on entering 3.
        assert_eq!(out.tuples.len(), 2);
        assert_eq!(out.tuples[0].steps, 3);
        assert_eq!(out.tuples[0].reward, 0.25);
        assert!(out.tuples[1].terminal);
        assert_eq!(out.tuples[1].reward, 0.5);
    }

    #[test]
    fn zero_reward_gives_zero_q() {
        let m = build_chain(8).unwrap();
        let d = generate_dataset(&m, &Behavior::UniformRandom, 10, 30, 0).unwrap();
        let tuples = relabel_high_level(&d, &chain_phi(8), &pm(), 3, &RewardFn::zero(&m), 0.9, None)
            .unwrap()
            .tuples;
        let h = train_high_level(&tuples, 8, 2, &HighLevelConfig::default()).unwrap();
        assert!(h.q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn k1_matches_constrained_q_iteration() {
        let m = build_chain(6).unwrap();
        let d = generate_dataset(&m, &Behavior::UniformRandom, 10, 30, 3).unwrap();
        let table = TransitionTable::from_dataset(&d, 6, 3).unwrap();
        let reward = |s: usize, a: usize| (s * 3 + a) as f64 * 0.1 - 0.4;
        let tuples: Vec<HighTuple> = d
            .transitions()
            .map(|(s, a, next)| HighTuple {
                s,
                z: a,
                reward: reward(s, a),
                next,
                steps: 1,
                terminal: false,
            })
            .collect();
        let cfg = HighLevelConfig {
            k: 1,
            gamma: 0.9,
            tol: 1e-11,
            ..HighLevelConfig::default()
        };
        let h = train_high_level(&tuples, 6, 3, &cfg).unwrap();
        let flat: Vec<f64> = (0..18).map(|i| reward(i / 3, i % 3)).collect();
        let (q, _) = constrained_q_iteration(&table, &flat, 0.9, 1e-11, 100_000);
        for s in 0..6 {
            for a in 0..3 {
                if table.successor[s * 3 + a].is_some() {
                    assert!((h.q(s, a) - q[s * 3 + a]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn goal_directed_k1_bridges_to_gcrl() {
        let m = build_chain(7).unwrap();
        let d = generate_dataset(&m, &Behavior::UniformRandom, 20, 40, 1).unwrap();
        let e = Embedding::from_points(&(0..7).map(|i| vec![i as f64, 0.3 * (i % 2) as f64]).collect::<Vec<_>>())
            .unwrap();
        let mean = mean_embedding(&e, &d).unwrap();
        let c = build_codebook(2, 16, 0).unwrap();
        let low = train_skills(&d, &e, &mean, &c, 3, &SkillConfig::default()).unwrap();
        for (start, g) in [(0, 6), (5, 1), (3, 3)] {
            let flat = rollout_gcrl(&m, &low, &e, g, start, 30, None).unwrap();
            let chooser = GoalDirected {
                emb: &e,
                codebook: &c,
                goal: g,
            };
            let r = RewardFn::zero(&m);
            let h = hierarchical_rollout(&m, &chooser, &low, 1, &r, 0.9, start, 30, Some(g)).unwrap();
            assert_eq!(h.trajectory, flat.trajectory);
            assert_eq!(h.reached, flat.steps);
        }
    }

    #[test]
    fn text_round_trip() {
        let h = HighLevelPolicy {
            n_states: 2,
            codebook_len: 3,
            k: 4,
            gamma: 0.95,
            q: vec![0.0, 1.5, 0.0, -0.25, 0.0, 0.0],
            observed: vec![false, true, false, true, false, false],
            residual: 0.0,
        };
        assert_eq!(HighLevelPolicy::from_text(&h.to_text()).unwrap(), h);
        assert_eq!(h.greedy(0), Some(1));
        assert_eq!(h.greedy(1), Some(0));
    }
}
