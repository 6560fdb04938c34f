//! Unlabeled offline trajectories: generation, coverage and the text format.
//!
//! ```text
//! #hilp-dataset v1 mdp=chain5 seed=0
//! #behavior=uniform-random
//! states:0,1,2|actions:1,1
//! ```

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{check_state, Mdp};
use crate::oracle::{optimal_goal_policy, temporal_distances, DistanceMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn new(states: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if states.len() != actions.len() + 1 {
            return Err(Error::InvalidDataset(format!(
                "trajectory has {} states and {} actions",
                states.len(),
                actions.len()
            )));
        }
        Ok(Trajectory { states, actions })
    }

    /// A trajectory consisting of one state and no transitions.
    pub fn single(state: usize) -> Self {
        Trajectory {
            states: vec![state],
            actions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn last_state(&self) -> usize {
        *self.states.last().expect("trajectories hold at least one state")
    }

    pub(crate) fn push(&mut self, action: usize, next: usize) {
        self.actions.push(action);
        self.states.push(next);
    }

    /// `(s, a, s')` triples in order.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.actions
            .iter()
            .enumerate()
            .map(|(t, &a)| (self.states[t], a, self.states[t + 1]))
    }

    /// Replays the actions through `mdp` and checks every successor.
    pub fn is_consistent_with(&self, mdp: &Mdp) -> bool {
        self.states.iter().all(|&s| s < mdp.n_states())
            && self.actions.iter().all(|&a| a < mdp.n_actions())
            && self.transitions().all(|(s, a, next)| mdp.step(s, a) == next)
    }
}

/// Behavior policy used to roll out a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Behavior {
    UniformRandom,
    /// Oracle-optimal toward `goal`, uniformly random with probability `epsilon`.
    /// A `goal` of `None` draws a fresh goal per trajectory.
    EpsilonGoalDirected { epsilon: f64, goal: Option<usize> },
    /// Half the trajectories uniform-random, half goal-directed with
    /// `epsilon = 0.3` toward a random goal.
    Mixture,
}

pub const MIXTURE_EPSILON: f64 = 0.3;

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Behavior::UniformRandom => write!(f, "uniform-random"),
            Behavior::EpsilonGoalDirected { epsilon, goal } => match goal {
                Some(g) => write!(f, "epsilon-goal-directed({epsilon},{g})"),
                None => write!(f, "epsilon-goal-directed({epsilon})"),
            },
            Behavior::Mixture => write!(f, "mixture"),
        }
    }
}

impl FromStr for Behavior {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        match text {
            "uniform-random" | "random" => return Ok(Behavior::UniformRandom),
            "mixture" => return Ok(Behavior::Mixture),
            _ => {}
        }
        if let Some(args) = text
            .strip_prefix("epsilon-goal-directed(")
            .and_then(|rest| rest.strip_suffix(')'))
        {
            let mut parts = args.split(',').map(str::trim);
            let epsilon: f64 = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("bad epsilon in {text:?}")))?;
            let goal = match parts.next() {
                Some(g) => Some(g.parse().map_err(|_| {
                    Error::InvalidArgument(format!("bad goal in {text:?}"))
                })?),
                None => None,
            };
            if parts.next().is_some() || !(0.0..=1.0).contains(&epsilon) {
                return Err(Error::InvalidArgument(format!(
                    "bad behavior arguments {text:?}"
                )));
            }
            return Ok(Behavior::EpsilonGoalDirected { epsilon, goal });
        }
        Err(Error::InvalidArgument(format!(
            "unknown behavior kind {text:?}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub source_mdp: String,
    pub seed: u64,
    pub behavior: String,
}

impl Dataset {
    pub fn new(
        trajectories: Vec<Trajectory>,
        source_mdp: impl Into<String>,
        seed: u64,
        behavior: impl Into<String>,
    ) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidDataset("dataset has no trajectories".into()));
        }
        if let Some(i) = trajectories.iter().position(|t| t.is_empty()) {
            return Err(Error::InvalidDataset(format!(
                "trajectory {i} has no transitions"
            )));
        }
        Ok(Dataset {
            trajectories,
            source_mdp: source_mdp.into(),
            seed,
            behavior: behavior.into(),
        })
    }

    /// Checks every index and transition against `mdp`.
    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        for (i, traj) in self.trajectories.iter().enumerate() {
            if !traj.is_consistent_with(mdp) {
                return Err(Error::InvalidDataset(format!(
                    "trajectory {i} is inconsistent with {mdp}"
                )));
            }
        }
        Ok(())
    }

    pub fn n_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.trajectories.iter().flat_map(Trajectory::transitions)
    }

    /// Every state occurrence, in trajectory order.
    pub fn state_occurrences(&self) -> impl Iterator<Item = usize> + '_ {
        self.trajectories.iter().flat_map(|t| t.states.iter().copied())
    }

    /// Distinct states that occur anywhere in the dataset, ascending.
    pub fn distinct_states(&self) -> Vec<usize> {
        let mut states: Vec<usize> = self.state_occurrences().collect();
        states.sort_unstable();
        states.dedup();
        states
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

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#hilp-dataset v1 mdp={} seed={}\n#behavior={}\n",
            self.source_mdp, self.seed, self.behavior
        );
        for traj in &self.trajectories {
            out.push_str("states:");
            out.push_str(&join_ids(&traj.states));
            out.push_str("|actions:");
            out.push_str(&join_ids(&traj.actions));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (header_no, header) = lines
            .next()
            .ok_or_else(|| Error::InvalidDataset("empty dataset file".into()))?;
        let fields = parse_header(header, "#hilp-dataset", header_no + 1)?;
        let mut source_mdp = None;
        let mut seed = None;
        for (key, value) in fields {
            match key {
                "mdp" => source_mdp = Some(value.to_string()),
                "seed" => {
                    seed = Some(value.parse::<u64>().map_err(|_| {
                        Error::parse(header_no + 1, format!("bad seed {value:?}"))
                    })?)
                }
                _ => {}
            }
        }
        let source_mdp =
            source_mdp.ok_or_else(|| Error::parse(header_no + 1, "header lacks mdp="))?;
        let seed = seed.ok_or_else(|| Error::parse(header_no + 1, "header lacks seed="))?;

        let mut behavior = String::new();
        let mut trajectories = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.trim();
            if let Some(label) = line.strip_prefix("#behavior=") {
                behavior = label.to_string();
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let (states_part, actions_part) = line
                .split_once('|')
                .ok_or_else(|| Error::parse(line_no, "expected `states:...|actions:...`"))?;
            let states = states_part
                .strip_prefix("states:")
                .ok_or_else(|| Error::parse(line_no, "missing `states:` prefix"))?;
            let actions = actions_part
                .strip_prefix("actions:")
                .ok_or_else(|| Error::parse(line_no, "missing `actions:` prefix"))?;
            let states = parse_ids(states, line_no, "state")?;
            let actions = parse_ids(actions, line_no, "action")?;
            let traj = Trajectory::new(states, actions)
                .map_err(|e| Error::parse(line_no, e.to_string()))?;
            trajectories.push(traj);
        }
        if trajectories.is_empty() {
            return Err(Error::InvalidDataset("dataset file has no trajectories".into()));
        }
        Dataset::new(trajectories, source_mdp, seed, behavior)
    }
}

pub(crate) fn join_ids(ids: &[usize]) -> String {
    let mut out = String::with_capacity(ids.len() * 3);
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&id.to_string());
    }
    out
}

fn parse_ids(text: &str, line: usize, what: &str) -> Result<Vec<usize>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(line, format!("non-integer {what} id {t:?}")))
        })
        .collect()
}

/// Splits `<magic> v1 key=value ...` into its key/value pairs.
pub(crate) fn parse_header<'a>(
    header: &'a str,
    magic: &str,
    line: usize,
) -> Result<Vec<(&'a str, &'a str)>> {
    let mut words = header.split_whitespace();
    if words.next() != Some(magic) {
        return Err(Error::parse(line, format!("expected `{magic}` header")));
    }
    if words.next() != Some("v1") {
        return Err(Error::parse(line, "unsupported format version"));
    }
    words
        .map(|w| {
            w.split_once('=')
                .ok_or_else(|| Error::parse(line, format!("malformed header field {w:?}")))
        })
        .collect()
}

/// Rolls out `n_trajectories` fixed-horizon episodes of `behavior`.
pub fn generate_dataset(
    mdp: &Mdp,
    behavior: &Behavior,
    n_trajectories: usize,
    horizon: usize,
    seed: u64,
) -> Result<Dataset> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if n_trajectories == 0 {
        return Err(Error::InvalidArgument(
            "n_trajectories must be at least 1".into(),
        ));
    }
    if let Behavior::EpsilonGoalDirected { epsilon, goal } = behavior {
        if !(0.0..=1.0).contains(epsilon) {
            return Err(Error::InvalidArgument(format!(
                "epsilon {epsilon} outside [0, 1]"
            )));
        }
        if let Some(g) = goal {
            check_state(mdp, *g)?;
        }
    }
    let needs_oracle = !matches!(behavior, Behavior::UniformRandom);
    let dist = needs_oracle.then(|| temporal_distances(mdp));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajectories = Vec::with_capacity(n_trajectories);
    for i in 0..n_trajectories {
        let start = sample_initial(mdp, &mut rng);
        let directed = match behavior {
            Behavior::UniformRandom => None,
            Behavior::EpsilonGoalDirected { epsilon, goal } => {
                let g = goal.unwrap_or_else(|| rng.gen_range(0..mdp.n_states()));
                Some((*epsilon, g))
            }
            Behavior::Mixture => {
                if i % 2 == 0 {
                    None
                } else {
                    Some((MIXTURE_EPSILON, rng.gen_range(0..mdp.n_states())))
                }
            }
        };
        let traj = match directed {
            None => rollout_random(mdp, start, horizon, &mut rng),
            Some((epsilon, goal)) => rollout_directed(
                mdp,
                dist.as_ref().expect("oracle distances computed"),
                start,
                goal,
                epsilon,
                horizon,
                &mut rng,
            ),
        };
        trajectories.push(traj);
    }
    Dataset::new(trajectories, mdp.name(), seed, behavior.to_string())
}

pub(crate) fn sample_initial(mdp: &Mdp, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(s, w) in mdp.initial_states() {
        acc += w;
        if u < acc {
            return s;
        }
    }
    mdp.initial_states()
        .iter()
        .rev()
        .find(|x| x.1 > 0.0)
        .map(|x| x.0)
        .unwrap_or(0)
}

fn rollout_random(mdp: &Mdp, start: usize, horizon: usize, rng: &mut impl Rng) -> Trajectory {
    let mut traj = Trajectory::single(start);
    let mut s = start;
    for _ in 0..horizon {
        let a = rng.gen_range(0..mdp.n_actions());
        s = mdp.step(s, a);
        traj.push(a, s);
    }
    traj
}

fn rollout_directed(
    mdp: &Mdp,
    dist: &DistanceMatrix,
    start: usize,
    goal: usize,
    epsilon: f64,
    horizon: usize,
    rng: &mut impl Rng,
) -> Trajectory {
    let policy = optimal_goal_policy(mdp, dist, goal);
    let mut traj = Trajectory::single(start);
    let mut s = start;
    for _ in 0..horizon {
        let greedy = policy.actions(s);
        let a = if greedy.is_empty() || rng.gen::<f64>() < epsilon {
            rng.gen_range(0..mdp.n_actions())
        } else {
            *greedy.choose(rng).expect("non-empty")
        };
        s = mdp.step(s, a);
        traj.push(a, s);
    }
    traj
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    /// Fraction of all `(s, a)` pairs observed at least once.
    pub fraction: f64,
    pub observed_pairs: usize,
    pub total_pairs: usize,
    /// Occurrences of each state, including final states.
    pub visit_counts: Vec<usize>,
    /// `pair_counts[s * n_actions + a]`.
    pub pair_counts: Vec<usize>,
}

pub fn dataset_coverage(dataset: &Dataset, mdp: &Mdp) -> Result<CoverageReport> {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let mut visit_counts = vec![0usize; n];
    let mut pair_counts = vec![0usize; n * na];
    for traj in &dataset.trajectories {
        for &s in &traj.states {
            if s >= n {
                return Err(Error::InvalidDataset(format!("state {s} out of range")));
            }
            visit_counts[s] += 1;
        }
        for (s, a, _) in traj.transitions() {
            if a >= na {
                return Err(Error::InvalidDataset(format!("action {a} out of range")));
            }
            pair_counts[s * na + a] += 1;
        }
    }
    let observed_pairs = pair_counts.iter().filter(|&&c| c > 0).count();
    Ok(CoverageReport {
        fraction: observed_pairs as f64 / (n * na) as f64,
        observed_pairs,
        total_pairs: n * na,
        visit_counts,
        pair_counts,
    })
}
