//! Invariant checks shared by the unit-style integration tests and the
//! acceptance runner. Each returns a short summary on success and the first
//! counterexample on failure.

#![allow(dead_code)]

use hilp::dataset::{generate_dataset, Behavior, Dataset};
use hilp::hierarchy::{relabel_high_level, train_high_level, HighLevelConfig, HighLevelPolicy};
use hilp::mdp::{
    build_chain, build_named_gridworld, corridor_maze_map, four_rooms_map, open_grid_map, Mdp,
    RewardFn,
};
use hilp::oracle::{floyd_warshall, temporal_distances};
use hilp::prompting::{gc_latent, infer_latent_regression, plan_latent, RegressionConfig};
use hilp::repr::{
    batch_gradient, batch_loss, expectile_loss, mean_embedding, Embedding, GoalSampler, ReprConfig,
};
use hilp::skills::{build_codebook, intrinsic_reward, skill_rollout, train_skills, RewardVariant, SkillConfig, SkillPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

/// Small maze with a dead end and a loop.
pub const MAZE_MAP: &str = "\
..#...
..#.#.
....#.
";

pub fn test_mdps() -> Vec<Mdp> {
    let mut out: Vec<Mdp> = [2, 3, 5, 16].iter().map(|&n| build_chain(n).unwrap()).collect();
    for (w, h) in [(1, 1), (3, 2), (8, 8)] {
        out.push(build_named_gridworld(&format!("grid{w}x{h}"), &open_grid_map(w, h)).unwrap());
    }
    out.push(build_named_gridworld("four-rooms", &four_rooms_map()).unwrap());
    out.push(build_named_gridworld("corridor64", &corridor_maze_map(64, 16).unwrap()).unwrap());
    out.push(build_named_gridworld("maze", MAZE_MAP).unwrap());
    out
}

pub fn grid_points(width: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|s| vec![(s % width) as f64, (s / width) as f64]).collect()
}

pub fn expectile_identities() -> Check {
    let mut n = 0;
    for i in -200..=200 {
        let x = i as f64 * 0.037;
        // Dyadic tau, so that 1 - tau is exact and equality is exact too.
        for j in 1..128 {
            let tau = j as f64 / 128.0;
            let (a, b) = (expectile_loss(x, tau), expectile_loss(-x, 1.0 - tau));
            if a != b {
                return Err(format!("l_tau({x}) = {a} but l_(1-tau)({}) = {b} at tau = {tau}", -x));
            }
            n += 1;
        }
        let half = expectile_loss(x, 0.5);
        if half != 0.5 * x * x {
            return Err(format!("l_0.5({x}) = {half}, expected {}", 0.5 * x * x));
        }
    }
    Ok(format!("{n} (x, tau) points"))
}

struct SkillFixture {
    mdp: Mdp,
    dataset: Dataset,
    emb: Embedding,
    policy: SkillPolicy,
}

fn skill_fixture(seed: u64, jitter: f64) -> SkillFixture {
    let mdp = build_named_gridworld("grid6x6", &open_grid_map(6, 6)).unwrap();
    let dataset = generate_dataset(&mdp, &Behavior::UniformRandom, 30, 40, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emb = Embedding::from_points(&grid_points(6, 36))
        .unwrap()
        .map_values(|_, _, v| v + rng.gen_range(-jitter..=jitter));
    let mean = mean_embedding(&emb, &dataset).unwrap();
    let codebook = build_codebook(2, 12, seed).unwrap();
    let policy = train_skills(&dataset, &emb, &mean, &codebook, mdp.n_actions(), &SkillConfig::default()).unwrap();
    SkillFixture { mdp, dataset, emb, policy }
}

/// Summed delta rewards along a rollout equal the latent displacement.
pub fn telescoping(seeds: std::ops::Range<u64>) -> Check {
    let mut rollouts = 0;
    for seed in seeds {
        let f = skill_fixture(seed, 0.4);
        let mean = mean_embedding(&f.emb, &f.dataset).unwrap();
        for z in f.policy.codebook.vectors() {
            for start in (0..36).step_by(5) {
                let out = skill_rollout(&f.mdp, &f.policy, &f.emb, z, start, 15).map_err(|e| e.to_string())?;
                let states = &out.trajectory.states;
                let sum: f64 = states
                    .windows(2)
                    .map(|w| intrinsic_reward(&f.emb, &mean, w[0], w[1], z, RewardVariant::Delta))
                    .sum();
                let scale = 1.0 + out.displacement.abs();
                if (sum - out.displacement).abs() > 1e-12 * scale {
                    return Err(format!(
                        "seed {seed} start {start}: reward sum {sum} != displacement {}",
                        out.displacement
                    ));
                }
                rollouts += 1;
            }
        }
    }
    Ok(format!("{rollouts} rollouts"))
}

/// `|<phi(s') - phi(s), z>| <= ||phi(s') - phi(s)|| ||z||` on every
/// dataset transition.
pub fn cauchy_schwarz(seeds: std::ops::Range<u64>) -> Check {
    let mut n = 0;
    for seed in seeds {
        let f = skill_fixture(seed, 2.0);
        let mean = mean_embedding(&f.emb, &f.dataset).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 99);
        for _ in 0..20 {
            let z: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (s, _, next) in f.dataset.transitions() {
                let r = intrinsic_reward(&f.emb, &mean, s, next, &z, RewardVariant::Delta);
                let bound = f.emb.raw_distance(s, next) * zn;
                if r.abs() > bound * (1.0 + 1e-12) + 1e-15 {
                    return Err(format!("seed {seed} ({s} -> {next}): |{r}| > {bound}"));
                }
                n += 1;
            }
        }
    }
    Ok(format!("{n} transitions"))
}

/// Goal, planning and regression prompts are unit vectors.
pub fn unit_prompts(seeds: std::ops::Range<u64>) -> Check {
    let unit = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() <= 1e-12;
    let mut n = 0;
    for seed in seeds {
        let f = skill_fixture(seed, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in 0..36 {
            for g in (0..36).filter(|&g| g != s) {
                let z = gc_latent(&f.emb, s, g).map_err(|e| e.to_string())?.latent.unwrap();
                let w = rng.gen_range(0..36);
                let target: Vec<f64> = f.emb.row(w).to_vec();
                let p = plan_latent(&f.emb, s, &target, g, vec![w]).map_err(|e| e.to_string())?;
                for v in [Some(z), p.latent] {
                    let v = v.ok_or("degenerate planning prompt")?;
                    if !unit(&v) {
                        return Err(format!("seed {seed} ({s}, {g}): prompt {v:?} is not unit-norm"));
                    }
                    n += 1;
                }
            }
        }
        for g in 0..36 {
            let reward = RewardFn::arrival(&f.mdp, g).unwrap();
            let cfg = RegressionConfig { n_samples: 500, seed, ..RegressionConfig::default() };
            let p = infer_latent_regression(&f.dataset, &f.emb, &reward, &cfg).map_err(|e| e.to_string())?;
            let v = p.latent.ok_or(format!("seed {seed} goal {g}: degenerate regression"))?;
            if !unit(&v) {
                return Err(format!("seed {seed} goal {g}: regression prompt {v:?} is not unit-norm"));
            }
            n += 1;
        }
    }
    Ok(format!("{n} prompts"))
}

/// Largest relative deviation between the analytic TD gradient and central
/// differences of the batch loss, over online coordinates touched by the
/// batch.
pub fn gradient_error(seed: u64, gamma: f64, tau: f64) -> f64 {
    let mdp = build_chain(6).unwrap();
    let dataset = generate_dataset(&mdp, &Behavior::UniformRandom, 10, 20, seed).unwrap();
    let config = ReprConfig { dim: 3, gamma, expectile_tau: tau, ..ReprConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Separate online and target values so the bootstrap term is a constant.
    let emb = Embedding::random(6, 3, seed)
        .unwrap()
        .scaled(20.0)
        .map_online(|_, _, v| v + rng.gen_range(-1.0..1.0));
    let sampler = GoalSampler::new(&dataset, &config).unwrap();
    let batch: Vec<_> = (0..32).map(|_| sampler.sample(&mut rng)).collect();
    let analytic = batch_gradient(&emb, &batch, &config);
    let h = 1e-5;
    // Components that nearly cancel are compared against a floor tied to the
    // gradient's overall size; below it central differences are round-off.
    let floor = 1e-4 * analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let (s, k) = (i / 3, i % 3);
        let shift = |d: f64| emb.map_online(|r, c, v| if (r, c) == (s, k) { v + d } else { v });
        let numeric = (batch_loss(&shift(h), &batch, &config) - batch_loss(&shift(-h), &batch, &config)) / (2.0 * h);
        let denom = a.abs().max(numeric.abs()).max(floor).max(1e-12);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

pub fn finite_differences() -> Check {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for seed in 0..10 {
        for (gamma, tau) in [(1.0, 0.9), (0.99, 0.7), (0.9, 0.95)] {
            worst = worst.max(gradient_error(seed, gamma, tau));
            n += 1;
        }
    }
    if worst <= 1e-5 {
        Ok(format!("{n} batches, worst relative error {worst:.2e}"))
    } else {
        Err(format!("worst relative error {worst:.2e} > 1e-5"))
    }
}

pub fn bfs_equals_floyd_warshall() -> Check {
    let mdps = test_mdps();
    for m in &mdps {
        if temporal_distances(m) != floyd_warshall(m) {
            return Err(format!("BFS and Floyd-Warshall disagree on {}", m.name()));
        }
    }
    Ok(format!("{} MDPs", mdps.len()))
}

pub fn round_trips() -> Check {
    let f = skill_fixture(3, 0.3);
    let back = Dataset::from_text(&f.dataset.to_text()).map_err(|e| e.to_string())?;
    if back != f.dataset {
        return Err("dataset changed across a text round trip".into());
    }
    let emb = Embedding::from_text(&f.emb.to_text()).map_err(|e| e.to_string())?;
    if emb.points() != f.emb.points() {
        return Err("embedding changed across a text round trip".into());
    }
    let policy = SkillPolicy::from_text(&f.policy.to_text()).map_err(|e| e.to_string())?;
    if policy != f.policy {
        return Err("skill policy changed across a text round trip".into());
    }
    let cfg = HighLevelConfig { k: 3, ..HighLevelConfig::default() };
    let reward = RewardFn::entering(&f.mdp, 35).unwrap();
    let relabel = relabel_high_level(&f.dataset, &f.emb, &f.policy.codebook, cfg.k, &reward, cfg.gamma, Some(35))
        .map_err(|e| e.to_string())?;
    let high = train_high_level(&relabel.tuples, 36, f.policy.codebook.len(), &cfg).map_err(|e| e.to_string())?;
    let high_back = HighLevelPolicy::from_text(&high.to_text()).map_err(|e| e.to_string())?;
    if high_back != high {
        return Err("high-level policy changed across a text round trip".into());
    }
    // Files as well as strings.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("skills.txt");
    f.policy.save(&path).map_err(|e| e.to_string())?;
    if SkillPolicy::load(&path).map_err(|e| e.to_string())? != f.policy {
        return Err("skill policy changed across a file round trip".into());
    }
    Ok("dataset, embedding, skills, high-level policy".into())
}
