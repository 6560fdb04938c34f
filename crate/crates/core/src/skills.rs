//! Latent-directed skills: one dataset-constrained Q table per codebook
//! direction `z`, maximizing the directional reward `<phi(s') - phi(s), z>`
//! (or the centered `<phi(s) - mean, z>`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{parse_header, Dataset, Trajectory};
use crate::error::{Error, Result};
use crate::mdp::{check_state, Mdp};
use crate::repr::{dot, norm, parse_floats, write_floats, Embedding, MeanEmbedding};

const MAX_RESAMPLES: usize = 1000;
const MAX_SEPARATION: f64 = 0.999;

/// Finite set of unit directions standing in for the uniform prior on the
/// unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCodebook {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl LatentCodebook {
    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        if vectors.is_empty() || dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidArgument(
                "codebook vectors must be non-empty and of equal dimension".into(),
            ));
        }
        if vectors.iter().any(|v| (norm(v) - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidArgument("codebook vectors must be unit".into()));
        }
        Ok(LatentCodebook { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Entry with the largest inner product with `z`; lowest index on ties.
    pub fn project(&self, z: &[f64]) -> Result<usize> {
        if z.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "latent has dimension {}, codebook has {}",
                z.len(),
                self.dim
            )));
        }
        if z.iter().all(|&v| v == 0.0) || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "cannot project a zero or non-finite latent".into(),
            ));
        }
        let mut best = 0;
        let mut best_ip = dot(&self.vectors[0], z);
        for (i, v) in self.vectors.iter().enumerate().skip(1) {
            let ip = dot(v, z);
            if ip > best_ip {
                best = i;
                best_ip = ip;
            }
        }
        Ok(best)
    }
}

/// `D = 1`: `{+1, -1}`. `D = 2`: `M` evenly spaced angles from 0.
/// `D >= 3`: `M` normalized Gaussian draws with pairwise inner products
/// at most 0.999.
pub fn build_codebook(dim: usize, m: usize, seed: u64) -> Result<LatentCodebook> {
    if dim == 0 {
        return Err(Error::InvalidArgument("codebook dimension must be >= 1".into()));
    }
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "codebook needs at least 2 entries, got {m}"
        )));
    }
    let vectors = match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..m)
            .map(|i| {
                let angle = std::f64::consts::TAU * i as f64 / m as f64;
                let (sin, cos) = angle.sin_cos();
                vec![cos, sin]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || loop {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = norm(&v);
                if n > 1e-12 {
                    return v.into_iter().map(|x| x / n).collect::<Vec<f64>>();
                }
            };
            let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(m);
            let mut resamples = 0;
            while vectors.len() < m {
                let v = draw();
                if vectors.iter().any(|w| dot(w, &v) > MAX_SEPARATION) {
                    resamples += 1;
                    if resamples > MAX_RESAMPLES {
                        return Err(Error::Codebook {
                            attempts: MAX_RESAMPLES,
                        });
                    }
                    continue;
                }
                vectors.push(v);
            }
            vectors
        }
    };
    LatentCodebook::from_vectors(vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RewardVariant {
    /// `<phi(s') - phi(s), z>`
    #[default]
    Delta,
    /// `<phi(s) - mean, z>`
    Centered,
}

impl std::fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RewardVariant::Delta => "delta",
            RewardVariant::Centered => "centered",
        })
    }
}

impl FromStr for RewardVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(RewardVariant::Delta),
            "centered" => Ok(RewardVariant::Centered),
            other => Err(Error::InvalidArgument(format!(
                "unknown reward variant {other:?}"
            ))),
        }
    }
}

pub fn intrinsic_reward(
    emb: &Embedding,
    mean: &MeanEmbedding,
    s: usize,
    s_next: usize,
    z: &[f64],
    variant: RewardVariant,
) -> f64 {
    match variant {
        RewardVariant::Delta => emb
            .row(s_next)
            .iter()
            .zip(emb.row(s))
            .zip(z)
            .map(|((a, b), z)| (a - b) * z)
            .sum(),
        RewardVariant::Centered => emb
            .row(s)
            .iter()
            .zip(&mean.mean)
            .zip(z)
            .map(|((a, m), z)| (a - m) * z)
            .sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkillConfig {
    pub codebook_size: usize,
    pub codebook_seed: u64,
    pub gamma_skill: f64,
    pub reward_variant: RewardVariant,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SkillConfig {
    fn default() -> Self {
        SkillConfig {
            codebook_size: 64,
            codebook_seed: 0,
            gamma_skill: 0.99,
            reward_variant: RewardVariant::Delta,
            tol: 1e-8,
            max_sweeps: 200_000,
        }
    }
}

impl SkillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.codebook_size < 2 {
            return Err(Error::validation("codebook_size", "must be >= 2"));
        }
        if !(self.gamma_skill > 0.0 && self.gamma_skill < 1.0) {
            return Err(Error::validation(
                "gamma_skill",
                format!("must lie in (0, 1), got {}", self.gamma_skill),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::validation("tol", "must be positive"));
        }
        Ok(())
    }
}

/// The latent-conditioned policy `pi(a | s, z)` over a codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillPolicy {
    pub codebook: LatentCodebook,
    n_states: usize,
    n_actions: usize,
    /// `q[(z * n_states + s) * n_actions + a]`; zero where masked out.
    q: Vec<f64>,
    /// `successor[s * n_actions + a]` for dataset-observed pairs.
    successor: Vec<Option<usize>>,
    pub gamma_skill: f64,
    pub reward_variant: RewardVariant,
    /// Final sup-norm backup residual per codebook entry.
    pub residuals: Vec<f64>,
}

impl SkillPolicy {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn allowed(&self, s: usize, a: usize) -> bool {
        self.successor[s * self.n_actions + a].is_some()
    }

    #[inline]
    pub fn q(&self, z: usize, s: usize, a: usize) -> f64 {
        self.q[(z * self.n_states + s) * self.n_actions + a]
    }

    /// States with no dataset-observed action.
    pub fn unmasked_states(&self) -> Vec<usize> {
        (0..self.n_states)
            .filter(|&s| (0..self.n_actions).all(|a| !self.allowed(s, a)))
            .collect()
    }

    /// Greedy mask-allowed action of codebook entry `z`; lowest index on ties.
    pub fn greedy(&self, z: usize, s: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for a in 0..self.n_actions {
            if !self.allowed(s, a) {
                continue;
            }
            match best {
                Some(b) if self.q(z, s, a) <= self.q(z, s, b) => {}
                _ => best = Some(a),
            }
        }
        best
    }

    pub fn value(&self, z: usize, s: usize) -> Option<f64> {
        self.greedy(z, s).map(|a| self.q(z, s, a))
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

    /// Header, `z=<i>:<v1>,...` codebook lines, `mask s=<s> a=<a> next=<s'>`
    /// lines, then `z=<i> s=<s> a=<a> q=<float>` for every allowed pair.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#hilp-skills v1 D={} M={} states={} actions={} gamma={} reward={}\n",
            self.codebook.dim(),
            self.codebook.len(),
            self.n_states,
            self.n_actions,
            self.gamma_skill,
            self.reward_variant
        );
        for (i, v) in self.codebook.vectors().iter().enumerate() {
            write!(out, "z={i}:").unwrap();
            write_floats(&mut out, v);
            out.push('\n');
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                if let Some(next) = self.successor[s * self.n_actions + a] {
                    writeln!(out, "mask s={s} a={a} next={next}").unwrap();
                }
            }
        }
        for z in 0..self.codebook.len() {
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    if self.allowed(s, a) {
                        writeln!(out, "z={z} s={s} a={a} q={}", self.q(z, s, a)).unwrap();
                    }
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hno, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty skill file"))?;
        let fields = parse_header(header, "#hilp-skills", hno + 1)?;
        let get = |key: &str| {
            fields
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::parse(hno + 1, format!("header lacks {key}=")))
        };
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::parse(hno + 1, format!("bad {key}=")))
        };
        let (dim, m, n, na) = (num("D")?, num("M")?, num("states")?, num("actions")?);
        let gamma_skill: f64 = get("gamma")?
            .parse()
            .map_err(|_| Error::parse(hno + 1, "bad gamma="))?;
        let reward_variant: RewardVariant = get("reward")?
            .parse()
            .map_err(|e: Error| Error::parse(hno + 1, e.to_string()))?;

        let mut vectors = vec![Vec::new(); m];
        let mut successor = vec![None; n * na];
        let mut q = vec![0.0; m * n * na];
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("mask ") {
                let kv = parse_kv(rest, line_no)?;
                let (s, a, next) = (
                    kv_usize(&kv, "s", line_no)?,
                    kv_usize(&kv, "a", line_no)?,
                    kv_usize(&kv, "next", line_no)?,
                );
                if s >= n || a >= na || next >= n {
                    return Err(Error::parse(line_no, "mask entry out of range"));
                }
                successor[s * na + a] = Some(next);
            } else if let Some((head, values)) = line.split_once(':') {
                let i: usize = head
                    .strip_prefix("z=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::parse(line_no, "bad codebook line"))?;
                if i >= m {
                    return Err(Error::parse(line_no, "codebook index out of range"));
                }
                vectors[i] = parse_floats(values, line_no)?;
                if vectors[i].len() != dim {
                    return Err(Error::parse(line_no, "codebook vector has wrong dimension"));
                }
            } else {
                let kv = parse_kv(line, line_no)?;
                let (z, s, a) = (
                    kv_usize(&kv, "z", line_no)?,
                    kv_usize(&kv, "s", line_no)?,
                    kv_usize(&kv, "a", line_no)?,
                );
                let value: f64 = kv
                    .iter()
                    .find(|(k, _)| *k == "q")
                    .and_then(|(_, v)| v.parse().ok())
                    .ok_or_else(|| Error::parse(line_no, "bad q="))?;
                if z >= m || s >= n || a >= na {
                    return Err(Error::parse(line_no, "q entry out of range"));
                }
                q[(z * n + s) * na + a] = value;
            }
        }
        let codebook = LatentCodebook::from_vectors(vectors)
            .map_err(|e| Error::parse(0, e.to_string()))?;
        Ok(SkillPolicy {
            codebook,
            n_states: n,
            n_actions: na,
            q,
            successor,
            gamma_skill,
            reward_variant,
            residuals: vec![0.0; m],
        })
    }
}

pub(crate) fn parse_kv(text: &str, line: usize) -> Result<Vec<(&str, &str)>> {
    text.split_whitespace()
        .map(|w| {
            w.split_once('=')
                .ok_or_else(|| Error::parse(line, format!("malformed field {w:?}")))
        })
        .collect()
}

pub(crate) fn kv_usize(kv: &[(&str, &str)], key: &str, line: usize) -> Result<usize> {
    kv.iter()
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| Error::parse(line, format!("missing or bad {key}=")))
}

/// Distinct dataset transitions `(s, a, s')` and the per-state action mask.
#[derive(Debug, Clone)]
pub(crate) struct TransitionTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub successor: Vec<Option<usize>>,
    /// Allowed actions per state, ascending.
    pub allowed: Vec<Vec<usize>>,
}

impl TransitionTable {
    pub fn from_dataset(dataset: &Dataset, n_states: usize, n_actions: usize) -> Result<Self> {
        let mut successor: Vec<Option<usize>> = vec![None; n_states * n_actions];
        for (s, a, next) in dataset.transitions() {
            if s >= n_states || next >= n_states || a >= n_actions {
                return Err(Error::InvalidDataset(format!(
                    "transition ({s}, {a}, {next}) out of range"
                )));
            }
            match successor[s * n_actions + a] {
                Some(prev) if prev != next => {
                    return Err(Error::InvalidDataset(format!(
                        "({s}, {a}) leads to both {prev} and {next}; dynamics must be deterministic"
                    )))
                }
                _ => successor[s * n_actions + a] = Some(next),
            }
        }
        let allowed = (0..n_states)
            .map(|s| {
                (0..n_actions)
                    .filter(|&a| successor[s * n_actions + a].is_some())
                    .collect()
            })
            .collect();
        Ok(TransitionTable {
            n_states,
            n_actions,
            successor,
            allowed,
        })
    }
}

/// Dataset-constrained Q iteration for one reward table `r[s * A + a]`.
/// Returns the Q table and its final sup-norm backup residual.
pub(crate) fn constrained_q_iteration(
    table: &TransitionTable,
    reward: &[f64],
    gamma: f64,
    tol: f64,
    max_sweeps: usize,
) -> (Vec<f64>, f64) {
    let (n, na) = (table.n_states, table.n_actions);
    let mut q = vec![0.0; n * na];
    let value = |q: &[f64], s: usize| -> f64 {
        table.allowed[s]
            .iter()
            .map(|&a| q[s * na + a])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let residual = |q: &[f64]| -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..n {
            for &a in &table.allowed[s] {
                let next = table.successor[s * na + a].expect("allowed");
                let v = if table.allowed[next].is_empty() {
                    0.0
                } else {
                    value(q, next)
                };
                worst = worst.max((reward[s * na + a] + gamma * v - q[s * na + a]).abs());
            }
        }
        worst
    };
    // In-place sweeps; stop once a full Jacobi residual is within tolerance.
    for sweep in 0..max_sweeps {
        let mut change: f64 = 0.0;
        for s in 0..n {
            for &a in &table.allowed[s] {
                let next = table.successor[s * na + a].expect("allowed");
                let v = if table.allowed[next].is_empty() {
                    0.0
                } else {
                    value(&q, next)
                };
                let updated = reward[s * na + a] + gamma * v;
                change = change.max((updated - q[s * na + a]).abs());
                q[s * na + a] = updated;
            }
        }
        if change <= tol * (1.0 - gamma) || (sweep % 64 == 63 && residual(&q) <= tol) {
            let r = residual(&q);
            if r <= tol {
                return (q, r);
            }
        }
    }
    let r = residual(&q);
    (q, r)
}

/// Trains one skill per codebook entry on the dataset's observed transitions.
pub fn train_skills(
    dataset: &Dataset,
    emb: &Embedding,
    mean: &MeanEmbedding,
    codebook: &LatentCodebook,
    n_actions: usize,
    config: &SkillConfig,
) -> Result<SkillPolicy> {
    config.validate()?;
    if codebook.dim() != emb.dim() {
        return Err(Error::InvalidArgument(format!(
            "codebook dimension {} differs from embedding dimension {}",
            codebook.dim(),
            emb.dim()
        )));
    }
    let n = emb.n_states();
    let table = TransitionTable::from_dataset(dataset, n, n_actions)?;
    if table.allowed.iter().all(Vec::is_empty) {
        return Err(Error::InvalidDataset("dataset has no transitions".into()));
    }
    let results: Vec<(Vec<f64>, f64)> = codebook
        .vectors()
        .par_iter()
        .map(|z| {
            let mut reward = vec![0.0; n * n_actions];
            for s in 0..n {
                for &a in &table.allowed[s] {
                    let next = table.successor[s * n_actions + a].expect("allowed");
                    reward[s * n_actions + a] =
                        intrinsic_reward(emb, mean, s, next, z, config.reward_variant);
                }
            }
            constrained_q_iteration(&table, &reward, config.gamma_skill, config.tol, config.max_sweeps)
        })
        .collect();
    let mut q = Vec::with_capacity(codebook.len() * n * n_actions);
    let mut residuals = Vec::with_capacity(codebook.len());
    for (table_q, residual) in results {
        if !residual.is_finite() || residual > config.tol {
            return Err(Error::NonFinite(format!(
                "skill backup residual {residual} above tolerance {}",
                config.tol
            )));
        }
        q.extend(table_q);
        residuals.push(residual);
    }
    Ok(SkillPolicy {
        codebook: codebook.clone(),
        n_states: n,
        n_actions,
        q,
        successor: table.successor,
        gamma_skill: config.gamma_skill,
        reward_variant: config.reward_variant,
        residuals,
    })
}

/// Projects `z` onto the codebook and returns that skill's greedy action.
pub fn act(policy: &SkillPolicy, s: usize, z: &[f64]) -> Result<usize> {
    let entry = policy.codebook.project(z)?;
    act_entry(policy, s, entry)
}

pub fn act_entry(policy: &SkillPolicy, s: usize, entry: usize) -> Result<usize> {
    if s >= policy.n_states {
        return Err(Error::InvalidArgument(format!("state {s} out of range")));
    }
    policy.greedy(entry, s).ok_or(Error::NoAction {
        state: s,
        partial: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillRollout {
    pub trajectory: Trajectory,
    /// `<phi(end) - phi(start), z>`
    pub displacement: f64,
}

/// Runs the skill selected by `z` for `horizon` environment steps.
pub fn skill_rollout(
    mdp: &Mdp,
    policy: &SkillPolicy,
    emb: &Embedding,
    z: &[f64],
    start: usize,
    horizon: usize,
) -> Result<SkillRollout> {
    check_state(mdp, start)?;
    let entry = policy.codebook.project(z)?;
    let mut traj = Trajectory::single(start);
    let mut s = start;
    for _ in 0..horizon {
        let a = match act_entry(policy, s, entry) {
            Ok(a) => a,
            Err(Error::NoAction { state, .. }) => {
                return Err(Error::NoAction {
                    state,
                    partial: Some(Box::new(traj)),
                })
            }
            Err(e) => return Err(e),
        };
        s = mdp.step(s, a);
        traj.push(a, s);
    }
    let displacement = emb
        .row(s)
        .iter()
        .zip(emb.row(start))
        .zip(z)
        .map(|((e, b), z)| (e - b) * z)
        .sum();
    Ok(SkillRollout {
        trajectory: traj,
        displacement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, Behavior};
    use crate::mdp::{build_chain, LEFT, RIGHT};
    use crate::repr::mean_embedding;

    fn chain_setup(n: usize) -> (Mdp, Dataset, Embedding, MeanEmbedding) {
        let m = build_chain(n).unwrap();
        let d = generate_dataset(&m, &Behavior::UniformRandom, 20, 40, 0).unwrap();
        let e = Embedding::from_points(&(0..n).map(|i| vec![i as f64, 0.0]).collect::<Vec<_>>())
            .unwrap();
        let mean = mean_embedding(&e, &d).unwrap();
        (m, d, e, mean)
    }

    #[test]
    fn codebook_shapes() {
        let c1 = build_codebook(1, 10, 0).unwrap();
        assert_eq!(c1.vectors(), &[vec![1.0], vec![-1.0]]);
        let c2 = build_codebook(2, 4, 0).unwrap();
        let expected = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (v, e) in c2.vectors().iter().zip(expected) {
            assert!((v[0] - e[0]).abs() < 1e-15 && (v[1] - e[1]).abs() < 1e-15);
        }
        let c8 = build_codebook(8, 64, 7).unwrap();
        assert_eq!(c8.len(), 64);
        for (i, v) in c8.vectors().iter().enumerate() {
            assert!((norm(v) - 1.0).abs() <= 1e-9);
            for w in &c8.vectors()[..i] {
                assert!(dot(v, w) <= MAX_SEPARATION);
            }
        }
        assert_eq!(build_codebook(8, 64, 7).unwrap(), c8);
        assert!(build_codebook(2, 1, 0).is_err());
        assert!(build_codebook(0, 4, 0).is_err());
    }

    #[test]
    fn separation_failure_is_reported() {
        // Far more caps of inner product 0.999 than fit on the 2-sphere.
        assert!(matches!(
            build_codebook(3, 20_000, 1),
            Err(Error::Codebook { .. })
        ));
    }

    #[test]
    fn projection_rules() {
        let c = build_codebook(2, 8, 0).unwrap();
        assert_eq!(c.project(c.vector(3)).unwrap(), 3);
        let half: Vec<f64> = c.vector(5).iter().map(|v| v * 0.5).collect();
        assert_eq!(c.project(&half).unwrap(), 5);
        let a = 20f64.to_radians();
        assert_eq!(c.project(&[a.cos(), a.sin()]).unwrap(), 0);
        assert!(c.project(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn rewards() {
        let e = Embedding::from_points(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let mean = MeanEmbedding {
            mean: vec![1.0, 0.0],
        };
        assert_eq!(intrinsic_reward(&e, &mean, 0, 1, &[1.0, 0.0], RewardVariant::Delta), 1.0);
        assert_eq!(intrinsic_reward(&e, &mean, 0, 1, &[0.0, 1.0], RewardVariant::Delta), 0.0);
        assert_eq!(
            intrinsic_reward(&e, &mean, 2, 0, &[1.0, 0.0], RewardVariant::Centered),
            1.0
        );
    }

    #[test]
    fn chain_skills_move_in_their_direction() {
        let (m, d, e, mean) = chain_setup(5);
        let c = build_codebook(2, 4, 0).unwrap();
        for variant in [RewardVariant::Delta, RewardVariant::Centered] {
            let cfg = SkillConfig {
                reward_variant: variant,
                ..SkillConfig::default()
            };
            let p = train_skills(&d, &e, &mean, &c, m.n_actions(), &cfg).unwrap();
            assert!(p.residuals.iter().all(|&r| r <= 1e-8));
            for s in 0..4 {
                assert_eq!(act(&p, s, &[1.0, 0.0]).unwrap(), RIGHT, "{variant} s={s}");
            }
            for s in 1..5 {
                assert_eq!(act(&p, s, &[-1.0, 0.0]).unwrap(), LEFT, "{variant} s={s}");
            }
        }
    }

    #[test]
    fn rollout_reaches_end_and_telescopes() {
        let (m, d, e, mean) = chain_setup(5);
        let c = build_codebook(2, 8, 0).unwrap();
        let p = train_skills(&d, &e, &mean, &c, 3, &SkillConfig::default()).unwrap();
        let r = skill_rollout(&m, &p, &e, &[1.0, 0.0], 0, 4).unwrap();
        assert_eq!(r.trajectory.last_state(), 4);
        assert_eq!(r.displacement, 4.0);
        let r0 = skill_rollout(&m, &p, &e, &[1.0, 0.0], 2, 0).unwrap();
        assert_eq!(r0.trajectory.states, vec![2]);
        assert_eq!(r0.displacement, 0.0);
    }

    #[test]
    fn unobserved_states_have_no_action() {
        let m = build_chain(4).unwrap();
        let d = Dataset::new(
            vec![Trajectory::new(vec![0, 1, 2], vec![RIGHT, RIGHT]).unwrap()],
            "chain4",
            0,
            "",
        )
        .unwrap();
        let e = Embedding::from_points(&(0..4).map(|i| vec![i as f64, 0.0]).collect::<Vec<_>>())
            .unwrap();
        let mean = mean_embedding(&e, &d).unwrap();
        let c = build_codebook(2, 4, 0).unwrap();
        let p = train_skills(&d, &e, &mean, &c, 3, &SkillConfig::default()).unwrap();
        assert_eq!(p.unmasked_states(), vec![2, 3]);
        match skill_rollout(&m, &p, &e, &[1.0, 0.0], 0, 5) {
            Err(Error::NoAction { state, partial }) => {
                assert_eq!(state, 2);
                assert_eq!(partial.unwrap().states, vec![0, 1, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn text_round_trip() {
        let (_, d, e, mean) = chain_setup(4);
        let c = build_codebook(2, 4, 0).unwrap();
        let p = train_skills(&d, &e, &mean, &c, 3, &SkillConfig::default()).unwrap();
        let text = p.to_text();
        assert!(text.starts_with("#hilp-skills v1 D=2 M=4 "));
        let back = SkillPolicy::from_text(&text).unwrap();
        assert_eq!(back.q, p.q);
        assert_eq!(back.successor, p.successor);
        assert_eq!(back.codebook, p.codebook);
    }
}
