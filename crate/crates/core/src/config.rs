//! Experiment configuration: one TOML file per experiment, plus the
//! shipped presets.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Behavior;
use crate::error::{Error, Result};
use crate::hierarchy::HighLevelConfig;
use crate::mdp::{
    build_chain, build_named_gridworld, corridor_maze_map, four_rooms_map, open_grid_map, Mdp,
};
use crate::prompting::{PlannerConfig, RegressionConfig};
use crate::repr::ReprConfig;
use crate::skills::SkillConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    Chain { length: usize },
    OpenGrid { width: usize, height: usize },
    FourRooms,
    Corridor { length: usize, width: usize },
    Map { name: String, map: String },
}

impl EnvSpec {
    pub fn build(&self) -> Result<Mdp> {
        match self {
            EnvSpec::Chain { length } => build_chain(*length),
            EnvSpec::OpenGrid { width, height } => build_named_gridworld(
                &format!("grid{width}x{height}"),
                &open_grid_map(*width, *height),
            ),
            EnvSpec::FourRooms => build_named_gridworld("four-rooms", &four_rooms_map()),
            EnvSpec::Corridor { length, width } => build_named_gridworld(
                &format!("corridor{length}"),
                &corridor_maze_map(*length, *width)?,
            ),
            EnvSpec::Map { name, map } => build_named_gridworld(name, map),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// `uniform-random`, `epsilon-goal-directed(eps[,goal])` or `mixture`.
    pub behavior: String,
    pub n_trajectories: usize,
    pub horizon: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            behavior: "uniform-random".into(),
            n_trajectories: 100,
            horizon: 100,
        }
    }
}

impl DatasetConfig {
    pub fn behavior(&self) -> Result<Behavior> {
        self.behavior
            .parse()
            .map_err(|e: Error| Error::validation("dataset.behavior", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Goal reaching from every start toward every goal.
    Gcrl,
    /// Reward-regression prompting on goal-cell rewards.
    Zeroshot,
    /// Hierarchical versus flat control toward one far goal.
    Hrl,
    /// Theorem checks on the trained and perturbed embeddings.
    Theory,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Gcrl => "gcrl",
            Task::Zeroshot => "zeroshot",
            Task::Hrl => "hrl",
            Task::Theory => "theory",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub tasks: Vec<Task>,
    /// Discount of the evaluation returns.
    pub gamma: f64,
    /// Goal-reaching budget is `ceil(horizon_factor * d*(s, g))` steps.
    pub horizon_factor: f64,
    /// Subsample of ordered `(start, goal)` pairs; all pairs when unset.
    pub max_pairs: Option<usize>,
    pub pair_seed: u64,
    /// Goal cells for the zero-shot reward tasks; the last state when empty.
    pub zeroshot_goals: Vec<usize>,
    pub zeroshot_horizon: usize,
    /// Far goal for the hierarchical task; the last state when unset.
    pub hrl_goal: Option<usize>,
    pub hrl_horizon: usize,
    pub perturbations: usize,
    pub perturb_scale: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tasks: vec![Task::Gcrl],
            gamma: 0.99,
            horizon_factor: 2.0,
            max_pairs: None,
            pair_seed: 0,
            zeroshot_goals: Vec::new(),
            zeroshot_horizon: 100,
            hrl_goal: None,
            hrl_horizon: 300,
            perturbations: 20,
            perturb_scale: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationAxis {
    LatentDim,
    Recursions,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent-dim" | "latent_dim" => Ok(AblationAxis::LatentDim),
            "recursions" => Ok(AblationAxis::Recursions),
            other => Err(Error::validation(
                "ablate.axis",
                format!("unknown axis {other:?}; expected latent-dim or recursions"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateConfig {
    pub axis: AblationAxis,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub env: EnvSpec,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub repr: ReprConfig,
    #[serde(default)]
    pub skills: SkillConfig,
    #[serde(default)]
    pub regression: RegressionConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub hierarchy: HighLevelConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub ablate: Option<AblateConfig>,
}

pub const PRESET_NAMES: [&str; 5] = [
    "chain16-gcrl",
    "grid8-zeroshot",
    "fourrooms-plan",
    "corridor64-hrl",
    "chain5-theory",
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "chain16-gcrl" => include_str!("../presets/chain16-gcrl.toml"),
        "grid8-zeroshot" => include_str!("../presets/grid8-zeroshot.toml"),
        "fourrooms-plan" => include_str!("../presets/fourrooms-plan.toml"),
        "corridor64-hrl" => include_str!("../presets/corridor64-hrl.toml"),
        "chain5-theory" => include_str!("../presets/chain5-theory.toml"),
        _ => return None,
    })
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::validation("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name).ok_or_else(|| {
            Error::validation(
                "preset",
                format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", ")),
            )
        })?;
        Self::from_toml(text)
    }

    /// Reads a TOML file, or a preset when `path` names one and no such
    /// file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_toml(&text),
            Err(e) => match path.to_str().and_then(preset_text) {
                Some(text) => Self::from_toml(text),
                None => Err(Error::io(path, e)),
            },
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(char::is_whitespace) {
            return Err(Error::validation("name", "must be non-empty without whitespace"));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "at least one seed is required"));
        }
        self.dataset.behavior()?;
        if self.dataset.n_trajectories == 0 || self.dataset.horizon == 0 {
            return Err(Error::validation(
                "dataset",
                "n_trajectories and horizon must be >= 1",
            ));
        }
        self.repr.validate()?;
        self.skills.validate()?;
        self.planner.validate()?;
        if self.eval.tasks.contains(&Task::Hrl) {
            self.hierarchy.validate()?;
        }
        if self.regression.n_samples < self.repr.dim {
            return Err(Error::validation(
                "regression.n_samples",
                format!("must be at least repr.dim = {}", self.repr.dim),
            ));
        }
        if !(self.regression.ridge_lambda >= 0.0) {
            return Err(Error::validation("regression.ridge_lambda", "must be >= 0"));
        }
        if !(self.eval.gamma > 0.0 && self.eval.gamma < 1.0) {
            return Err(Error::validation("eval.gamma", "must lie in (0, 1)"));
        }
        if !(self.eval.horizon_factor >= 1.0) {
            return Err(Error::validation("eval.horizon_factor", "must be >= 1"));
        }
        if self.eval.tasks.is_empty() {
            return Err(Error::validation("eval.tasks", "at least one task is required"));
        }
        if let Some(ablate) = &self.ablate {
            if ablate.values.is_empty() {
                return Err(Error::validation("ablate.values", "axis list is empty"));
            }
            if ablate.axis == AblationAxis::LatentDim && ablate.values.contains(&0) {
                return Err(Error::validation("ablate.values", "latent dimension must be >= 1"));
            }
        }
        Ok(())
    }

    /// Stable digest of the whole configuration.
    pub fn hash(&self) -> String {
        stable_hash(self)
    }
}

/// Hex SHA-256 of the canonical JSON encoding.
pub fn stable_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configs serialize");
    hex::encode(Sha256::digest(json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in PRESET_NAMES {
            let cfg = ExperimentConfig::preset(name).unwrap();
            assert_eq!(cfg.name, name);
            cfg.env.build().unwrap();
        }
    }

    #[test]
    fn round_trip_keeps_hash() {
        let cfg = ExperimentConfig::preset("fourrooms-plan").unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn bad_tau_names_field() {
        let text = preset_text("chain5-theory")
            .unwrap()
            .replace("expectile_tau = 0.9", "expectile_tau = 0.5");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("expectile_tau"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{}\nbogus = 1\n", preset_text("chain5-theory").unwrap());
        assert!(ExperimentConfig::from_toml(&text).unwrap_err().is_validation());
    }

    #[test]
    fn empty_ablation_axis() {
        let text = preset_text("fourrooms-plan")
            .unwrap()
            .replace("values = [0, 1, 2, 3]", "values = []");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("ablate.values"), "{err}");
    }
}
