//! End-to-end experiments: cached stages, the evaluation protocols and the
//! commands behind the `hilp` binary.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{stable_hash, AblationAxis, ExperimentConfig, Task};
use crate::dataset::{dataset_coverage, generate_dataset, Dataset};
use crate::error::{Error, Result};
use crate::hierarchy::{hierarchical_rollout, relabel_high_level, train_high_level, trajectory_return};
use crate::mdp::{Mdp, RewardFn};
use crate::oracle::{temporal_distances, value_iteration, DistanceMatrix, DEFAULT_VI_TOL};
use crate::prompting::{
    infer_latent_regression, rollout_gcrl, rollout_zeroshot_rl, Planner, PlannerConfig,
    RegressionConfig,
};
use crate::repr::{embedding_error, mean_embedding, train_repr, Embedding, ReprConfig, TrainLog};
use crate::report::{aggregate, EvalReport, EvalRow, SeedMetrics, TheorySummary};
use crate::skills::{build_codebook, train_skills, SkillPolicy};
use crate::theory::{check_theorem, TheoryReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Gen,
    TrainRepr,
    TrainSkills,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Gen => "gen",
            Stage::TrainRepr => "train-repr",
            Stage::TrainSkills => "train-skills",
        }
    }
}

fn in_stage<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        e => Error::Stage {
            stage: stage.to_string(),
            source: Box::new(e),
        },
    })
}

/// Artifacts of one seed, up to the requested stage.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub dataset: Dataset,
    pub embedding: Option<Embedding>,
    /// Present only when the embedding was trained in this call.
    pub train_log: Option<TrainLog>,
    pub skills: Option<SkillPolicy>,
    /// Stages that were loaded from the cache.
    pub cached: Vec<Stage>,
}

/// One experiment on one environment. With an output directory, stage
/// outputs are cached there under content hashes of their inputs.
pub struct Runner {
    pub config: ExperimentConfig,
    pub mdp: Mdp,
    pub dist: DistanceMatrix,
    pub out: Option<PathBuf>,
}

impl Runner {
    pub fn new(config: ExperimentConfig, out: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        let mdp = config.env.build()?;
        let dist = temporal_distances(&mdp);
        if let Some(dir) = &out {
            let cache = dir.join("cache");
            fs::create_dir_all(&cache).map_err(|e| Error::io(&cache, e))?;
        }
        Ok(Runner {
            config,
            mdp,
            dist,
            out,
        })
    }

    fn repr_config(&self, seed: u64) -> ReprConfig {
        ReprConfig {
            seed,
            ..self.config.repr.clone()
        }
    }

    fn dataset_key(&self, seed: u64) -> String {
        stable_hash(&("dataset", &self.config.env, &self.config.dataset, seed))
    }

    fn repr_key(&self, seed: u64) -> String {
        stable_hash(&("repr", self.dataset_key(seed), self.repr_config(seed)))
    }

    fn skills_key(&self, seed: u64) -> String {
        stable_hash(&("skills", self.repr_key(seed), &self.config.skills))
    }

    fn cache_path(&self, stage: &str, key: &str) -> Option<PathBuf> {
        self.out
            .as_ref()
            .map(|d| d.join("cache").join(format!("{stage}-{}.txt", &key[..16])))
    }

    fn cached<T>(&self, path: &Option<PathBuf>, load: impl Fn(&Path) -> Result<T>) -> Option<T> {
        path.as_ref().filter(|p| p.exists()).and_then(|p| load(p).ok())
    }

    pub fn dataset(&self, seed: u64) -> Result<(Dataset, bool)> {
        let path = self.cache_path("dataset", &self.dataset_key(seed));
        if let Some(d) = self.cached(&path, |p| Dataset::load(p)) {
            return Ok((d, true));
        }
        let cfg = &self.config.dataset;
        let d = in_stage(
            "gen",
            generate_dataset(&self.mdp, &cfg.behavior()?, cfg.n_trajectories, cfg.horizon, seed),
        )?;
        if let Some(p) = &path {
            write_atomic(p, &d.to_text())?;
        }
        Ok((d, false))
    }

    pub fn embedding(
        &self,
        seed: u64,
        dataset: &Dataset,
    ) -> Result<(Embedding, Option<TrainLog>, bool)> {
        let key = self.repr_key(seed);
        let path = self.cache_path("embedding", &key);
        if let Some(e) = self.cached(&path, |p| Embedding::load(p)) {
            return Ok((e, None, true));
        }
        let (emb, log) = in_stage(
            "train-repr",
            train_repr(dataset, self.mdp.n_states(), &self.repr_config(seed)),
        )?;
        if let Some(p) = &path {
            write_atomic(p, &emb.to_text())?;
            write_atomic(&p.with_extension("log.csv"), &log.to_csv())?;
        }
        Ok((emb, Some(log), false))
    }

    pub fn skills(&self, seed: u64, dataset: &Dataset, emb: &Embedding) -> Result<(SkillPolicy, bool)> {
        let path = self.cache_path("skills", &self.skills_key(seed));
        if let Some(p) = self.cached(&path, |p| SkillPolicy::load(p)) {
            return Ok((p, true));
        }
        let cfg = &self.config.skills;
        let policy = in_stage("train-skills", (|| {
            let mean = mean_embedding(emb, dataset)?;
            let codebook = build_codebook(emb.dim(), cfg.codebook_size, cfg.codebook_seed)?;
            train_skills(dataset, emb, &mean, &codebook, self.mdp.n_actions(), cfg)
        })())?;
        if let Some(p) = &path {
            write_atomic(p, &policy.to_text())?;
        }
        Ok((policy, false))
    }

    /// Runs (or loads) every stage up to and including `upto`.
    pub fn artifacts(&self, seed: u64, upto: Stage) -> Result<SeedArtifacts> {
        let mut cached = Vec::new();
        let (dataset, hit) = self.dataset(seed)?;
        if hit {
            cached.push(Stage::Gen);
        }
        let mut art = SeedArtifacts {
            seed,
            dataset,
            embedding: None,
            train_log: None,
            skills: None,
            cached,
        };
        if upto >= Stage::TrainRepr {
            let (emb, log, hit) = self.embedding(seed, &art.dataset)?;
            if hit {
                art.cached.push(Stage::TrainRepr);
            }
            art.embedding = Some(emb);
            art.train_log = log;
        }
        if upto >= Stage::TrainSkills {
            let emb = art.embedding.as_ref().expect("trained above");
            let (policy, hit) = self.skills(seed, &art.dataset, emb)?;
            if hit {
                art.cached.push(Stage::TrainSkills);
            }
            art.skills = Some(policy);
        }
        Ok(art)
    }

    /// Ordered reachable `(start, goal)` pairs with `start != goal`,
    /// subsampled to `eval.max_pairs` with `eval.pair_seed`.
    pub fn eval_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.mdp.n_states();
        let all: Vec<(usize, usize)> = (0..n)
            .flat_map(|s| (0..n).map(move |g| (s, g)))
            .filter(|&(s, g)| s != g && self.dist.get(s, g).is_some())
            .collect();
        match self.config.eval.max_pairs {
            Some(k) if k < all.len() => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.eval.pair_seed);
                let mut idx = sample_indices(&mut rng, all.len(), k).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| all[i]).collect()
            }
            _ => all,
        }
    }

    fn row(&self, task: String, mode: String, recursions: usize, seed: u64) -> EvalRow {
        EvalRow {
            env: self.mdp.name().to_string(),
            task,
            prompt_mode: mode,
            recursions,
            seed,
            success: false,
            steps: None,
            ret: 0.0,
            oracle_return: 0.0,
        }
    }

    /// Goal reaching over [`Self::eval_pairs`] within `ceil(factor * d*)`
    /// steps; returns are `gamma^(steps - 1)` for entering the goal.
    pub fn eval_gcrl(
        &self,
        seed: u64,
        art: &SeedArtifacts,
        recursions: &[usize],
        mode_suffix: &str,
    ) -> Result<Vec<EvalRow>> {
        let emb = art.embedding.as_ref().expect("embedding stage ran");
        let policy = art.skills.as_ref().expect("skill stage ran");
        let gamma = self.config.eval.gamma;
        let pairs = self.eval_pairs();
        let mut rows = Vec::new();
        for &r in recursions {
            let planner = if r > 0 {
                let cfg = PlannerConfig {
                    recursions: r,
                    ..self.config.planner.clone()
                };
                Some(Planner::new(&art.dataset, emb, &cfg)?)
            } else {
                None
            };
            let mode = format!("{}{mode_suffix}", if r > 0 { "plan" } else { "goal" });
            let part: Vec<EvalRow> = pairs
                .par_iter()
                .map(|&(s, g)| {
                    let d = self.dist.get(s, g).expect("reachable pairs only");
                    let budget = (self.config.eval.horizon_factor * d as f64).ceil() as usize;
                    let out = rollout_gcrl(&self.mdp, policy, emb, g, s, budget, planner.as_ref())?;
                    let mut row = self.row("gcrl".into(), mode.clone(), r, seed);
                    row.success = out.success;
                    row.steps = out.steps;
                    row.ret = out.steps.map_or(0.0, |t| gamma.powi(t as i32 - 1));
                    row.oracle_return = gamma.powi(d as i32 - 1);
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            rows.extend(part);
        }
        Ok(rows)
    }

    fn zeroshot_goals(&self) -> Result<Vec<usize>> {
        let n = self.mdp.n_states();
        let goals = &self.config.eval.zeroshot_goals;
        if let Some(&g) = goals.iter().find(|&&g| g >= n) {
            return Err(Error::validation(
                "eval.zeroshot_goals",
                format!("state {g} out of range for {n} states"),
            ));
        }
        Ok(if goals.is_empty() { vec![n - 1] } else { goals.clone() })
    }

    /// Reward regression on `r = 1(s' = g)` for each configured goal cell,
    /// rolled out from every state with a fixed prompt latent.
    pub fn eval_zeroshot(&self, seed: u64, art: &SeedArtifacts, mode_suffix: &str) -> Result<Vec<EvalRow>> {
        let emb = art.embedding.as_ref().expect("embedding stage ran");
        let policy = art.skills.as_ref().expect("skill stage ran");
        let eval = &self.config.eval;
        let mut rows = Vec::new();
        for g in self.zeroshot_goals()? {
            let reward = RewardFn::arrival(&self.mdp, g)?;
            let oracle = value_iteration(&self.mdp, &reward, eval.gamma, DEFAULT_VI_TOL)?;
            let cfg = RegressionConfig {
                seed: self.config.regression.seed ^ seed,
                ..self.config.regression.clone()
            };
            let prompt = infer_latent_regression(&art.dataset, emb, &reward, &cfg)?;
            let part: Vec<EvalRow> = (0..self.mdp.n_states())
                .into_par_iter()
                .map(|start| {
                    let mut row =
                        self.row(format!("zeroshot-g{g}"), format!("regression{mode_suffix}"), 0, seed);
                    if prompt.is_degenerate() {
                        row.oracle_return = crate::oracle::oracle_return(
                            &self.mdp,
                            &reward,
                            eval.gamma,
                            |s| oracle.greedy(s),
                            start,
                            eval.zeroshot_horizon,
                        )?;
                        return Ok(row);
                    }
                    let out = rollout_zeroshot_rl(
                        &self.mdp,
                        policy,
                        &reward,
                        eval.gamma,
                        &prompt,
                        &oracle,
                        start,
                        eval.zeroshot_horizon,
                    )?;
                    row.steps = out.trajectory.states.iter().position(|&s| s == g);
                    row.success = row.steps.is_some();
                    row.ret = out.ret;
                    row.oracle_return = out.oracle_return;
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            rows.extend(part);
        }
        Ok(rows)
    }

    /// Flat goal prompting versus a high-level policy over the same skills,
    /// toward one far goal from every other state.
    pub fn eval_hrl(&self, seed: u64, art: &SeedArtifacts, mode_suffix: &str) -> Result<Vec<EvalRow>> {
        let emb = art.embedding.as_ref().expect("embedding stage ran");
        let policy = art.skills.as_ref().expect("skill stage ran");
        let eval = &self.config.eval;
        let hcfg = &self.config.hierarchy;
        let n = self.mdp.n_states();
        let g = eval.hrl_goal.unwrap_or(n - 1);
        if g >= n {
            return Err(Error::validation("eval.hrl_goal", format!("state {g} out of range")));
        }
        let reward = RewardFn::entering(&self.mdp, g)?;
        let relabel = relabel_high_level(
            &art.dataset,
            emb,
            &policy.codebook,
            hcfg.k,
            &reward,
            hcfg.gamma,
            Some(g),
        )?;
        let high = train_high_level(&relabel.tuples, n, policy.codebook.len(), hcfg)?;
        let starts: Vec<usize> = (0..n)
            .filter(|&s| s != g && self.dist.get(s, g).is_some())
            .collect();
        let rows: Vec<Vec<EvalRow>> = starts
            .par_iter()
            .map(|&s| {
                let d = self.dist.get(s, g).expect("filtered");
                let oracle = eval.gamma.powi(d as i32 - 1);
                let flat = rollout_gcrl(&self.mdp, policy, emb, g, s, eval.hrl_horizon, None)?;
                let mut a = self.row("hrl".into(), format!("flat{mode_suffix}"), 0, seed);
                a.success = flat.success;
                a.steps = flat.steps;
                a.ret = trajectory_return(&flat.trajectory, &reward, eval.gamma);
                a.oracle_return = oracle;
                let h = hierarchical_rollout(
                    &self.mdp,
                    &high,
                    policy,
                    hcfg.k,
                    &reward,
                    eval.gamma,
                    s,
                    eval.hrl_horizon,
                    Some(g),
                )?;
                let mut b = self.row("hrl".into(), format!("hierarchical{mode_suffix}"), 0, seed);
                b.success = h.reached.is_some();
                b.steps = h.reached;
                b.ret = h.ret;
                b.oracle_return = oracle;
                Ok(vec![a, b])
            })
            .collect::<Result<_>>()?;
        let (mut flat, mut hier): (Vec<EvalRow>, Vec<EvalRow>) = rows
            .into_iter()
            .flatten()
            .partition(|r| r.prompt_mode.starts_with("flat"));
        flat.append(&mut hier);
        Ok(flat)
    }

    /// Theorem checks on the trained embedding and on
    /// `eval.perturbations` copies with uniform noise of `eval.perturb_scale`.
    pub fn eval_theory(&self, seed: u64, emb: &Embedding) -> Result<(TheoryReport, Vec<TheorySummary>)> {
        let regime = if self.config.repr.gamma == 1.0 {
            "exact"
        } else {
            "approximate"
        };
        let mut trained = check_theorem(&self.mdp, emb, &self.dist)?;
        trained.regime = regime.into();
        let mut summaries = vec![summarize(seed, "trained", &trained)];
        let eval = &self.config.eval;
        for i in 0..eval.perturbations {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
            let noisy = emb.map_values(|_, _, v| v + rng.gen_range(-eval.perturb_scale..=eval.perturb_scale));
            let mut r = check_theorem(&self.mdp, &noisy, &self.dist)?;
            r.regime = regime.into();
            summaries.push(summarize(seed, &format!("perturbed-{i}"), &r));
        }
        Ok((trained, summaries))
    }

    fn metrics(&self, seed: u64, art: &SeedArtifacts) -> Result<SeedMetrics> {
        let emb = art.embedding.as_ref().expect("embedding stage ran");
        Ok(SeedMetrics {
            seed,
            dim: emb.dim(),
            eps_e: embedding_error(emb, &self.dist, 1.0)?.eps_e,
            eps_e_target: embedding_error(emb, &self.dist, self.config.repr.gamma)?.eps_e,
            coverage: dataset_coverage(&art.dataset, &self.mdp)?.fraction,
        })
    }

    /// Every configured task for one seed.
    pub fn evaluate_seed(
        &self,
        seed: u64,
        recursions: &[usize],
        mode_suffix: &str,
    ) -> Result<SeedEval> {
        let tasks = &self.config.eval.tasks;
        let needs_skills = tasks.iter().any(|t| *t != Task::Theory);
        let upto = if needs_skills {
            Stage::TrainSkills
        } else {
            Stage::TrainRepr
        };
        let art = self.artifacts(seed, upto)?;
        let mut rows = Vec::new();
        let mut theory = Vec::new();
        let mut theory_report = None;
        for task in tasks {
            match task {
                Task::Gcrl => rows.extend(in_stage("eval", self.eval_gcrl(seed, &art, recursions, mode_suffix))?),
                Task::Zeroshot => rows.extend(in_stage("eval", self.eval_zeroshot(seed, &art, mode_suffix))?),
                Task::Hrl => rows.extend(in_stage("eval", self.eval_hrl(seed, &art, mode_suffix))?),
                Task::Theory => {
                    let (report, summaries) =
                        in_stage("theory", self.eval_theory(seed, art.embedding.as_ref().expect("trained")))?;
                    theory.extend(summaries);
                    theory_report = Some(report);
                }
            }
        }
        Ok(SeedEval {
            metrics: self.metrics(seed, &art)?,
            rows,
            theory,
            theory_report,
            artifacts: art,
        })
    }

    fn default_recursions(&self) -> Vec<usize> {
        let r = self.config.planner.recursions;
        if r > 0 {
            vec![0, r]
        } else {
            vec![0]
        }
    }

    /// All seeds in parallel, assembled in seed order.
    pub fn evaluate(&self, recursions: &[usize], mode_suffix: &str) -> Result<Vec<SeedEval>> {
        self.config
            .seeds
            .par_iter()
            .map(|&seed| self.evaluate_seed(seed, recursions, mode_suffix))
            .collect()
    }

    fn report(&self, evals: &[SeedEval]) -> EvalReport {
        let rows: Vec<EvalRow> = evals.iter().flat_map(|e| e.rows.clone()).collect();
        EvalReport {
            name: self.config.name.clone(),
            env: self.mdp.name().to_string(),
            config_hash: self.config.hash(),
            version: VERSION.to_string(),
            seeds: self.config.seeds.clone(),
            aggregates: aggregate(&rows),
            rows,
            seed_metrics: evals.iter().map(|e| e.metrics.clone()).collect(),
            theory: evals.iter().flat_map(|e| e.theory.clone()).collect(),
        }
    }
}

/// Outputs of [`Runner::evaluate_seed`].
#[derive(Debug, Clone)]
pub struct SeedEval {
    pub rows: Vec<EvalRow>,
    pub metrics: SeedMetrics,
    pub theory: Vec<TheorySummary>,
    pub theory_report: Option<TheoryReport>,
    pub artifacts: SeedArtifacts,
}

fn summarize(seed: u64, label: &str, r: &TheoryReport) -> TheorySummary {
    TheorySummary {
        seed,
        label: label.to_string(),
        regime: r.regime.clone(),
        eps_e_global: r.eps_e_global,
        eps_d_global: r.eps_d_global,
        condition_holds: r.condition_holds,
        pairs_checked: r.pairs_checked,
        local_condition_pairs: r.local_condition_pairs,
        violations: r.violations,
        feasibility_tested: r.feasibility_checks.tested,
        feasibility_passed: r.feasibility_checks.passed,
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_string_pretty(value)?)
}

fn with_seeds(mut config: ExperimentConfig, seed: Option<u64>) -> ExperimentConfig {
    if let Some(s) = seed {
        config.seeds = vec![s];
    }
    config
}

fn write_stage_outputs(runner: &Runner, out: &Path, upto: Stage) -> Result<Vec<PathBuf>> {
    let arts: Vec<SeedArtifacts> = runner
        .config
        .seeds
        .par_iter()
        .map(|&s| runner.artifacts(s, upto))
        .collect::<Result<_>>()?;
    let mut written = Vec::new();
    for art in arts {
        let seed = art.seed;
        let mut put = |name: String, text: String| -> Result<()> {
            let p = out.join(name);
            write_atomic(&p, &text)?;
            written.push(p);
            Ok(())
        };
        put(format!("dataset-seed{seed}.txt"), art.dataset.to_text())?;
        if let Some(e) = &art.embedding {
            put(format!("embedding-seed{seed}.txt"), e.to_text())?;
        }
        if let Some(log) = &art.train_log {
            put(format!("train-log-seed{seed}.csv"), log.to_csv())?;
        }
        if let Some(p) = &art.skills {
            put(format!("skills-seed{seed}.txt"), p.to_text())?;
        }
    }
    Ok(written)
}

/// Writes the dataset of every seed.
pub fn cmd_gen(config: ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let runner = Runner::new(with_seeds(config, seed), Some(out.to_path_buf()))?;
    write_stage_outputs(&runner, out, Stage::Gen)
}

/// Writes datasets and trained embeddings.
pub fn cmd_train_repr(config: ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let runner = Runner::new(with_seeds(config, seed), Some(out.to_path_buf()))?;
    write_stage_outputs(&runner, out, Stage::TrainRepr)
}

/// Writes datasets, embeddings and skill policies.
pub fn cmd_train_skills(config: ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let runner = Runner::new(with_seeds(config, seed), Some(out.to_path_buf()))?;
    write_stage_outputs(&runner, out, Stage::TrainSkills)
}

/// Runs every stage and task, writing `report.csv`, `report.json` and the
/// per-seed theory reports. Theory counterexamples are returned as
/// [`Error::TheoryDefect`] after the reports are written.
pub fn cmd_run(config: ExperimentConfig, out: Option<&Path>, seed: Option<u64>) -> Result<EvalReport> {
    let runner = Runner::new(with_seeds(config, seed), out.map(Path::to_path_buf))?;
    let evals = runner.evaluate(&runner.default_recursions(), "")?;
    let report = runner.report(&evals);
    if let Some(dir) = out {
        write_atomic(&dir.join("report.csv"), &report.to_csv())?;
        write_json(&dir.join("report.json"), &report)?;
        write_theory_files(dir, &evals)?;
    }
    ensure_no_defects(&report)?;
    Ok(report)
}

fn write_theory_files(dir: &Path, evals: &[SeedEval]) -> Result<()> {
    for e in evals {
        if let Some(t) = &e.theory_report {
            let seed = e.metrics.seed;
            write_atomic(&dir.join(format!("theory-seed{seed}.json")), &t.to_json()?)?;
            write_atomic(&dir.join(format!("theory-seed{seed}.csv")), &t.per_pair_csv())?;
        }
    }
    Ok(())
}

fn ensure_no_defects(report: &EvalReport) -> Result<()> {
    match report.theory_defects() {
        0 => Ok(()),
        n => Err(Error::TheoryDefect(format!(
            "{n} counterexamples to the greedy-optimality implication"
        ))),
    }
}

/// One evaluation per axis value and seed, written as `ablate.csv` and
/// `ablate.json`.
pub fn cmd_ablate(config: ExperimentConfig, out: Option<&Path>, seed: Option<u64>) -> Result<EvalReport> {
    let config = with_seeds(config, seed);
    let ablate = config
        .ablate
        .clone()
        .ok_or_else(|| Error::validation("ablate", "config has no [ablate] section"))?;
    if ablate.values.is_empty() {
        return Err(Error::validation("ablate.values", "axis list is empty"));
    }
    let mut evals = Vec::new();
    let base = Runner::new(config.clone(), out.map(Path::to_path_buf))?;
    match ablate.axis {
        AblationAxis::Recursions => {
            evals = base.evaluate(&ablate.values, "")?;
        }
        AblationAxis::LatentDim => {
            for &dim in &ablate.values {
                let mut cfg = config.clone();
                cfg.repr.dim = dim;
                let runner = Runner::new(cfg, out.map(Path::to_path_buf))?;
                evals.extend(runner.evaluate(&runner.default_recursions(), &format!("@D={dim}"))?);
            }
        }
    }
    let report = base.report(&evals);
    if let Some(dir) = out {
        write_atomic(&dir.join("ablate.csv"), &report.to_csv())?;
        write_json(&dir.join("ablate.json"), &report)?;
    }
    ensure_no_defects(&report)?;
    Ok(report)
}

/// Theorem checks only; trains the embedding when it is not cached.
pub fn cmd_theory(config: ExperimentConfig, out: Option<&Path>, seed: Option<u64>) -> Result<Vec<TheorySummary>> {
    let mut config = with_seeds(config, seed);
    config.eval.tasks = vec![Task::Theory];
    let runner = Runner::new(config, out.map(Path::to_path_buf))?;
    let evals = runner.evaluate(&[0], "")?;
    let summaries: Vec<TheorySummary> = evals.iter().flat_map(|e| e.theory.clone()).collect();
    if let Some(dir) = out {
        write_json(&dir.join("theory.json"), &summaries)?;
        write_theory_files(dir, &evals)?;
    }
    let defects: usize = summaries
        .iter()
        .map(|t| t.violations + t.feasibility_tested - t.feasibility_passed)
        .sum();
    if defects > 0 {
        return Err(Error::TheoryDefect(format!("{defects} counterexamples")));
    }
    Ok(summaries)
}
