//! Tabular Hilbert representation learning.
//!
//! Each state owns a free vector `phi(s)` in `R^D`. The goal-conditioned value
//! is parameterized as `V(s, g) = -||phi(s) - phi(g)||` and trained with the
//! expectile temporal-difference loss
//!
//! ```text
//! l_tau(-1[s != g] - gamma * ||phibar(s') - phibar(g)|| + ||phi(s) - phi(g)||)
//! ```
//!
//! where `phibar` is a Polyak-averaged target copy and the bootstrap term is
//! zero when `s' = g`. Goals are relabeled in hindsight: a geometric offset
//! into the future of the same trajectory with probability
//! `future_goal_prob`, otherwise a uniform dataset state; `g = s` is never
//! used.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{parse_header, Dataset};
use crate::error::{Error, Result};
use crate::oracle::{discounted_distance, DistanceMatrix};

pub const DEFAULT_NORM_EPSILON: f64 = 1e-6;
const GOAL_RETRIES: usize = 100;

/// Asymmetric squared loss `|tau - 1(x < 0)| * x^2`.
#[inline]
pub fn expectile_loss(x: f64, tau: f64) -> f64 {
    expectile_weight(x, tau) * x * x
}

#[inline]
fn expectile_weight(x: f64, tau: f64) -> f64 {
    if x < 0.0 {
        1.0 - tau
    } else {
        tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    n_states: usize,
    dim: usize,
    phi: Vec<f64>,
    phi_target: Vec<f64>,
    pub norm_epsilon: f64,
}

impl Embedding {
    /// I.i.d. uniform entries in `[-0.1, 0.1]`; the target starts as a copy.
    pub fn random(n_states: usize, dim: usize, seed: u64) -> Result<Self> {
        if n_states == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding needs at least one state and one dimension".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi: Vec<f64> = (0..n_states * dim)
            .map(|_| rng.gen_range(-0.1..=0.1))
            .collect();
        Ok(Embedding {
            n_states,
            dim,
            phi_target: phi.clone(),
            phi,
            norm_epsilon: DEFAULT_NORM_EPSILON,
        })
    }

    /// Embedding with the given rows; the target equals `phi`.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.is_empty() || dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument(
                "points must be non-empty rows of equal positive length".into(),
            ));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding point".into()));
        }
        let phi: Vec<f64> = points.concat();
        Ok(Embedding {
            n_states: points.len(),
            dim,
            phi_target: phi.clone(),
            phi,
            norm_epsilon: DEFAULT_NORM_EPSILON,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.phi[s * self.dim..(s + 1) * self.dim]
    }

    #[inline]
    pub fn target_row(&self, s: usize) -> &[f64] {
        &self.phi_target[s * self.dim..(s + 1) * self.dim]
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.n_states).map(|s| self.row(s).to_vec()).collect()
    }

    /// Smoothed latent distance `sqrt(||phi(s) - phi(g)||^2 + eps^2)`.
    #[inline]
    pub fn latent_distance(&self, s: usize, g: usize, use_target: bool) -> f64 {
        let (a, b) = if use_target {
            (self.target_row(s), self.target_row(g))
        } else {
            (self.row(s), self.row(g))
        };
        (sq_dist(a, b) + self.norm_epsilon * self.norm_epsilon).sqrt()
    }

    /// Unsmoothed `||phi(s) - phi(g)||`.
    #[inline]
    pub fn raw_distance(&self, s: usize, g: usize) -> f64 {
        sq_dist(self.row(s), self.row(g)).sqrt()
    }

    /// Multiplies every coordinate (and the target) by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.phi.iter_mut().for_each(|v| *v *= c);
        out.phi_target.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Applies `f(state, coordinate, value)` to every entry of `phi` and
    /// resets the target to match.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for (i, v) in out.phi.iter_mut().enumerate() {
            *v = f(i / self.dim, i % self.dim, *v);
        }
        out.phi_target = out.phi.clone();
        out
    }

    /// Like [`Self::map_values`] but leaves the target untouched.
    pub fn map_online(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for (i, v) in out.phi.iter_mut().enumerate() {
            *v = f(i / self.dim, i % self.dim, *v);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.phi.iter().chain(&self.phi_target).all(|v| v.is_finite())
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

    /// `#hilp-embedding v1 D=<d> states=<n>` followed by `<id>:<v1>,<v2>,...`.
    /// Only `phi` is written; a loaded embedding has `phibar = phi`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#hilp-embedding v1 D={} states={}\n",
            self.dim, self.n_states
        );
        for s in 0..self.n_states {
            write!(out, "{s}:").unwrap();
            write_floats(&mut out, self.row(s));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hno, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty embedding file"))?;
        let mut dim = None;
        let mut n = None;
        for (k, v) in parse_header(header, "#hilp-embedding", hno + 1)? {
            match k {
                "D" => dim = v.parse::<usize>().ok(),
                "states" => n = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        let dim = dim.ok_or_else(|| Error::parse(hno + 1, "missing or bad D="))?;
        let n = n.ok_or_else(|| Error::parse(hno + 1, "missing or bad states="))?;
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
        for (idx, line) in lines {
            let line_no = idx + 1;
            let (id, values) = line
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::parse(line_no, "expected `<id>:<values>`"))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad state id {id:?}")))?;
            if id >= n {
                return Err(Error::parse(line_no, format!("state {id} out of range")));
            }
            let values = parse_floats(values, line_no)?;
            if values.len() != dim {
                return Err(Error::parse(
                    line_no,
                    format!("expected {dim} values, got {}", values.len()),
                ));
            }
            rows[id] = Some(values);
        }
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .enumerate()
            .map(|(s, r)| r.ok_or_else(|| Error::parse(0, format!("state {s} missing"))))
            .collect::<Result<_>>()?;
        Self::from_points(&rows)
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn write_floats(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        // Display prints the shortest string that parses back to `v`.
        write!(out, "{v}").unwrap();
    }
}

pub(crate) fn parse_floats(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(line, format!("bad float {t:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReprConfig {
    pub dim: usize,
    pub gamma: f64,
    pub expectile_tau: f64,
    pub learning_rate: f64,
    /// Polyak coefficient for the target copy.
    pub target_rate: f64,
    /// Parameter of the future-offset geometric distribution; defaults to
    /// `1 - gamma`, floored at 0.01.
    pub geometric_p: Option<f64>,
    pub future_goal_prob: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ReprConfig {
    fn default() -> Self {
        ReprConfig {
            dim: 2,
            gamma: 0.99,
            expectile_tau: 0.9,
            learning_rate: 0.05,
            target_rate: 0.005,
            geometric_p: None,
            future_goal_prob: 0.625,
            steps: 100_000,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl ReprConfig {
    pub fn geometric_p(&self) -> f64 {
        self.geometric_p.unwrap_or((1.0 - self.gamma).max(0.01))
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(field, msg))
            }
        };
        check(self.dim >= 1, "dim", format!("must be >= 1, got {}", self.dim))?;
        check(
            self.gamma > 0.0 && self.gamma <= 1.0,
            "gamma",
            format!("must lie in (0, 1], got {}", self.gamma),
        )?;
        check(
            self.expectile_tau > 0.5 && self.expectile_tau < 1.0,
            "expectile_tau",
            format!("must lie in (0.5, 1), got {}", self.expectile_tau),
        )?;
        check(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            "learning_rate",
            format!("must be a non-negative number, got {}", self.learning_rate),
        )?;
        check(
            (0.0..=1.0).contains(&self.target_rate),
            "target_rate",
            format!("must lie in [0, 1], got {}", self.target_rate),
        )?;
        let p = self.geometric_p();
        check(
            p > 0.0 && p < 1.0,
            "geometric_p",
            format!("must lie in (0, 1), got {p}"),
        )?;
        check(
            (0.0..=1.0).contains(&self.future_goal_prob),
            "future_goal_prob",
            format!("must lie in [0, 1], got {}", self.future_goal_prob),
        )?;
        check(
            self.batch_size >= 1,
            "batch_size",
            "must be >= 1".to_string(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelabeledTuple {
    pub s: usize,
    pub s_next: usize,
    pub g: usize,
    /// Whether the goal came from the future-offset branch.
    pub future: bool,
}

/// Flattened view of a dataset for hindsight goal relabeling.
#[derive(Debug, Clone)]
pub struct GoalSampler {
    flat: Vec<usize>,
    /// `(position of s in flat, position of the trajectory's last state)`.
    transitions: Vec<(usize, usize)>,
    distinct: Vec<usize>,
    future_goal_prob: f64,
    log_keep: f64,
}

impl GoalSampler {
    pub fn new(dataset: &Dataset, config: &ReprConfig) -> Result<Self> {
        let mut flat = Vec::new();
        let mut transitions = Vec::with_capacity(dataset.n_transitions());
        for traj in &dataset.trajectories {
            let base = flat.len();
            flat.extend_from_slice(&traj.states);
            let last = flat.len() - 1;
            transitions.extend((0..traj.len()).map(|t| (base + t, last)));
        }
        if transitions.is_empty() {
            return Err(Error::InvalidDataset("dataset has no transitions".into()));
        }
        let distinct = dataset.distinct_states();
        if distinct.len() < 2 {
            return Err(Error::InvalidDataset(
                "goal relabeling needs at least two distinct states".into(),
            ));
        }
        let p = config.geometric_p();
        Ok(GoalSampler {
            flat,
            transitions,
            distinct,
            future_goal_prob: config.future_goal_prob,
            log_keep: (1.0 - p).ln(),
        })
    }

    /// Offset `k >= 1` with `P(k) = p (1 - p)^(k - 1)`, clamped to `max`.
    fn geometric_offset(&self, rng: &mut impl Rng, max: usize) -> usize {
        let u: f64 = 1.0 - rng.gen::<f64>();
        let k = 1.0 + (u.ln() / self.log_keep).floor();
        if k.is_finite() && k < max as f64 {
            k as usize
        } else {
            max
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> RelabeledTuple {
        let (pos, last) = self.transitions[rng.gen_range(0..self.transitions.len())];
        let s = self.flat[pos];
        let s_next = self.flat[pos + 1];
        let future = rng.gen::<f64>() < self.future_goal_prob;
        for _ in 0..GOAL_RETRIES {
            let g = if future {
                self.flat[pos + self.geometric_offset(rng, last - pos)]
            } else {
                self.flat[rng.gen_range(0..self.flat.len())]
            };
            if g != s {
                return RelabeledTuple {
                    s,
                    s_next,
                    g,
                    future,
                };
            }
        }
        // Fall back to a uniform distinct state other than s.
        // s is itself a dataset state, so skip over its slot.
        let own = self.distinct.binary_search(&s).expect("s occurs in the dataset");
        let mut idx = rng.gen_range(0..self.distinct.len() - 1);
        if idx >= own {
            idx += 1;
        }
        let g = self.distinct[idx];
        RelabeledTuple {
            s,
            s_next,
            g,
            future,
        }
    }
}

/// Residual `x` of one tuple; the expectile loss is applied to it.
#[inline]
fn td_residual(emb: &Embedding, t: &RelabeledTuple, gamma: f64) -> f64 {
    let reward = if t.s != t.g { -1.0 } else { 0.0 };
    let bootstrap = if t.s_next == t.g {
        0.0
    } else {
        emb.latent_distance(t.s_next, t.g, true)
    };
    reward - gamma * bootstrap + emb.latent_distance(t.s, t.g, false)
}

/// Mean expectile TD loss of a batch.
pub fn batch_loss(emb: &Embedding, batch: &[RelabeledTuple], config: &ReprConfig) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|t| expectile_loss(td_residual(emb, t, config.gamma), config.expectile_tau))
        .sum();
    total / batch.len() as f64
}

/// Analytic gradient of [`batch_loss`] with respect to `phi`, row-major.
pub fn batch_gradient(emb: &Embedding, batch: &[RelabeledTuple], config: &ReprConfig) -> Vec<f64> {
    let mut grad = vec![0.0; emb.n_states * emb.dim];
    accumulate_gradient(emb, batch, config, &mut grad);
    grad
}

fn accumulate_gradient(
    emb: &Embedding,
    batch: &[RelabeledTuple],
    config: &ReprConfig,
    grad: &mut [f64],
) -> f64 {
    let dim = emb.dim;
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for t in batch {
        let x = td_residual(emb, t, config.gamma);
        let w = expectile_weight(x, config.expectile_tau);
        total += w * x * x;
        if t.s == t.g {
            continue;
        }
        let dist = emb.latent_distance(t.s, t.g, false);
        let coeff = scale * 2.0 * w * x / dist;
        let (rs, rg) = (t.s * dim, t.g * dim);
        for k in 0..dim {
            let diff = emb.phi[rs + k] - emb.phi[rg + k];
            grad[rs + k] += coeff * diff;
            grad[rg + k] -= coeff * diff;
        }
    }
    total * scale
}

/// One SGD step on `phi` followed by the Polyak update of the target.
/// Returns the batch loss evaluated before the step.
pub fn td_step(emb: &mut Embedding, batch: &[RelabeledTuple], config: &ReprConfig) -> Result<f64> {
    let mut scratch = TdScratch::new(emb);
    scratch.step(emb, batch, config)
}

struct TdScratch {
    grad: Vec<f64>,
    touched: Vec<usize>,
    mark: Vec<bool>,
}

impl TdScratch {
    fn new(emb: &Embedding) -> Self {
        TdScratch {
            grad: vec![0.0; emb.phi.len()],
            touched: Vec::new(),
            mark: vec![false; emb.n_states],
        }
    }

    fn step(
        &mut self,
        emb: &mut Embedding,
        batch: &[RelabeledTuple],
        config: &ReprConfig,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if let Some(t) = batch
            .iter()
            .find(|t| t.s.max(t.s_next).max(t.g) >= emb.n_states)
        {
            return Err(Error::InvalidArgument(format!(
                "tuple {t:?} references a state outside the embedding"
            )));
        }
        for t in batch {
            for s in [t.s, t.g] {
                if !self.mark[s] {
                    self.mark[s] = true;
                    self.touched.push(s);
                }
            }
        }
        let loss = accumulate_gradient(emb, batch, config, &mut self.grad);
        let dim = emb.dim;
        let mut finite = loss.is_finite();
        for &s in &self.touched {
            for k in s * dim..(s + 1) * dim {
                finite &= self.grad[k].is_finite();
            }
        }
        if !finite {
            self.clear();
            return Err(Error::NonFinite(format!(
                "td gradient or loss (loss = {loss})"
            )));
        }
        for &s in &self.touched {
            for k in s * dim..(s + 1) * dim {
                emb.phi[k] -= config.learning_rate * self.grad[k];
            }
        }
        self.clear();
        let rho = config.target_rate;
        if rho > 0.0 {
            for (target, &online) in emb.phi_target.iter_mut().zip(&emb.phi) {
                *target += rho * (online - *target);
            }
        }
        Ok(loss)
    }

    fn clear(&mut self) {
        let dim = self.grad.len() / self.mark.len();
        for &s in &self.touched {
            self.mark[s] = false;
            self.grad[s * dim..(s + 1) * dim].fill(0.0);
        }
        self.touched.clear();
    }
}

pub const LOG_EVERY: usize = 1000;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    /// `(step, mean loss over the preceding window)` every [`LOG_EVERY`] steps.
    pub rows: Vec<(usize, f64)>,
    /// Loss of every step.
    pub losses: Vec<f64>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (step, loss) in &self.rows {
            writeln!(out, "{step},{loss}").unwrap();
        }
        out
    }

    /// Mean loss over the first and the last `fraction` of steps.
    pub fn trend(&self, fraction: f64) -> Option<(f64, f64)> {
        let n = self.losses.len();
        let w = ((n as f64 * fraction).ceil() as usize).max(1);
        if n < w {
            return None;
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        Some((mean(&self.losses[..w]), mean(&self.losses[n - w..])))
    }
}

/// Trains a fresh embedding for `n_states` states.
pub fn train_repr(
    dataset: &Dataset,
    n_states: usize,
    config: &ReprConfig,
) -> Result<(Embedding, TrainLog)> {
    let emb = Embedding::random(n_states, config.dim, config.seed)?;
    continue_training(emb, dataset, config, config.steps)
}

/// Runs `steps` further TD steps on `emb`. Sampling randomness is derived
/// from `config.seed`, so a run is reproducible from its inputs.
pub fn continue_training(
    mut emb: Embedding,
    dataset: &Dataset,
    config: &ReprConfig,
    steps: usize,
) -> Result<(Embedding, TrainLog)> {
    config.validate()?;
    if emb.dim != config.dim {
        return Err(Error::validation(
            "dim",
            format!("embedding has D={}, config has D={}", emb.dim, config.dim),
        ));
    }
    if let Some(s) = dataset.state_occurrences().find(|&s| s >= emb.n_states) {
        return Err(Error::InvalidDataset(format!(
            "state {s} outside the embedding's {} states",
            emb.n_states
        )));
    }
    let mut log = TrainLog::default();
    if steps == 0 {
        return Ok((emb, log));
    }
    let sampler = GoalSampler::new(dataset, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0005_eed0_f4e9_u64);
    let mut scratch = TdScratch::new(&emb);
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut window = 0.0;
    log.losses.reserve(steps);
    for step in 1..=steps {
        batch.clear();
        batch.extend((0..config.batch_size).map(|_| sampler.sample(&mut rng)));
        let loss = scratch.step(&mut emb, &batch, config)?;
        log.losses.push(loss);
        window += loss;
        if step % LOG_EVERY == 0 {
            log.rows.push((step, window / LOG_EVERY as f64));
            window = 0.0;
        }
    }
    Ok((emb, log))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingError {
    /// Largest absolute error over reachable pairs.
    pub eps_e: f64,
    /// `per_pair[s * n + g]`, `None` for unreachable pairs.
    pub per_pair: Vec<Option<f64>>,
    pub excluded: usize,
}

/// `sup |target(s, g) - ||phi(s) - phi(g)|||` where the target is the
/// discounted step count (plain step count at `gamma = 1`).
pub fn embedding_error(emb: &Embedding, dist: &DistanceMatrix, gamma: f64) -> Result<EmbeddingError> {
    let n = dist.n_states();
    if emb.n_states != n {
        return Err(Error::InvalidArgument(format!(
            "embedding has {} states, distances have {n}",
            emb.n_states
        )));
    }
    let mut per_pair = Vec::with_capacity(n * n);
    let mut eps_e: f64 = 0.0;
    let mut excluded = 0;
    for s in 0..n {
        for g in 0..n {
            match dist.get(s, g) {
                Some(d) => {
                    let target = discounted_distance(Some(d), gamma)?;
                    let err = (target - emb.raw_distance(s, g)).abs();
                    eps_e = eps_e.max(err);
                    per_pair.push(Some(err));
                }
                None => {
                    excluded += 1;
                    per_pair.push(None);
                }
            }
        }
    }
    Ok(EmbeddingError {
        eps_e,
        per_pair,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanEmbedding {
    pub mean: Vec<f64>,
}

/// Occurrence-weighted average of `phi` over every dataset state.
pub fn mean_embedding(emb: &Embedding, dataset: &Dataset) -> Result<MeanEmbedding> {
    let mut mean = vec![0.0; emb.dim];
    let mut count = 0usize;
    for s in dataset.state_occurrences() {
        if s >= emb.n_states {
            return Err(Error::InvalidDataset(format!("state {s} out of range")));
        }
        for (m, v) in mean.iter_mut().zip(emb.row(s)) {
            *m += v;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidDataset("empty dataset".into()));
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    Ok(MeanEmbedding { mean })
}
