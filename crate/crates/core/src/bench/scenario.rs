use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::belief::{ModelClass, ModelId};
use crate::dynamics::{DynamicsModel, Threshold};
use crate::env::{init_grid, GoalKind, SteeringObjective};
use crate::error::{Result, SteerError};
use crate::game::{make_coop_game, matching_pennies, stag_hunt, GameSpec, JointPolicy, MarkovGame};
use crate::learn::{StartRule, StartSampler, TrainerConfig};
use crate::rng::derive_seed;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameSource {
    StagHunt,
    MatchingPennies,
    Coop { agents: usize, reward_a: f64, reward_b: f64 },
    Spec { spec: GameSpec },
}

impl GameSource {
    pub fn build(&self) -> Result<MarkovGame<f64>> {
        match self {
            Self::StagHunt => Ok(stag_hunt()),
            Self::MatchingPennies => Ok(matching_pennies()),
            Self::Coop { agents, reward_a, reward_b } => make_coop_game(*agents, *reward_a, *reward_b),
            Self::Spec { spec } => MarkovGame::from_spec(spec),
        }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub game: GameSource,
    /// Known dynamics. Either this or `class` must be present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<DynamicsModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ModelClass>,
    /// True models to evaluate against when `class` is set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub truths: Vec<ModelId>,
    pub objective: SteeringObjective,
    /// Success threshold on the steering gap.
    pub epsilon: f64,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_horizon: Option<usize>,
    /// Starting policies for evaluation.
    pub starts: StartRule,
    /// Number of draws when `starts` is random.
    #[serde(default = "default_random_starts")]
    pub random_starts: usize,
    /// Episodes per (model, start) pair.
    pub rollouts: usize,
    pub trainer: TrainerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explorer: Option<TrainerConfig>,
    /// Weight of the uniform policy in the constructed target.
    #[serde(default = "default_construct_mix")]
    pub construct_mix: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

fn default_random_starts() -> usize {
    16
}

fn default_construct_mix() -> f64 {
    0.01
}

impl Scenario {
    fn base(name: &str, game: GameSource, objective: SteeringObjective, starts: StartRule) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            game,
            model: None,
            class: None,
            truths: Vec::new(),
            objective,
            epsilon: 0.01,
            horizon: 500,
            explore_horizon: None,
            starts,
            random_starts: default_random_starts(),
            rollouts: 1,
            trainer: TrainerConfig::default(),
            explorer: None,
            construct_mix: default_construct_mix(),
            out_dir: None,
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["staghunt", "matching_pennies", "belief2", "coop10"]
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let staghunt_obj =
            SteeringObjective::new(GoalKind::TotalUtility, 25.0, 10.0).with_shift(-10.0).with_shaping(true);
        let grid5 = StartRule::Grid { resolution: 5 };
        let sc = match name {
            "staghunt" => {
                let mut sc = Self::base(name, GameSource::StagHunt, staghunt_obj, grid5);
                sc.model = Some(DynamicsModel::exact_npg(0.01));
                sc
            }
            "matching_pennies" => {
                let game = matching_pennies::<f64>();
                let ne = JointPolicy::uniform(game.policy_shape());
                let obj =
                    SteeringObjective::new(GoalKind::NegL2ToTarget, 25.0, 10.0).with_target(ne).with_shaping(true);
                let mut sc = Self::base(name, GameSource::MatchingPennies, obj, grid5);
                sc.model = Some(DynamicsModel::exact_npg(0.01));
                sc
            }
            "belief2" => {
                let obj = SteeringObjective { model_betas: Some(vec![70.0, 20.0]), beta: 20.0, ..staghunt_obj };
                let mut sc = Self::base(name, GameSource::StagHunt, obj, grid5);
                sc.class = Some(ModelClass::explicit(vec![
                    DynamicsModel::noisy_lr(0.7, 0.3),
                    DynamicsModel::noisy_lr(1.0, 0.3),
                ]));
                sc.truths = vec![vec![0], vec![1]];
                sc.rollouts = 5;
                sc.trainer.cem.iterations = 100;
                sc
            }
            "coop10" => {
                let n = 10;
                let game = make_coop_game::<f64>(n, 2.0, 1.0)?;
                let start = JointPolicy::from_first_action_probs(game.policy_shape(), &vec![1.0 / 3.0; n])?;
                let obj = SteeringObjective::new(GoalKind::AverageUtility, 10.0, 2.0).with_shaping(true);
                let mut sc = Self::base(
                    name,
                    GameSource::Coop { agents: n, reward_a: 2.0, reward_b: 1.0 },
                    obj,
                    StartRule::Fixed { policy: start.clone() },
                );
                let cands = vec![Threshold(0.5), Threshold(1.0), Threshold(1.5), Threshold::NEVER];
                sc.class = Some(ModelClass::factored(vec![cands; n]));
                sc.truths = vec![vec![0; n], vec![2; n], vec![3; n], (0..n).map(|i| i % 4).collect()];
                sc.explore_horizon = Some(30);
                sc.rollouts = 8;
                sc.trainer.init_output_bias = 0.0;
                sc.trainer.hidden = 8;
                sc.trainer.subtract_min = true;
                sc.trainer.shared_action_bias = true;
                sc.trainer.cem.iterations = 100;
                let mut explorer = TrainerConfig {
                    starts: StartRule::Fixed { policy: start },
                    cost_weight: 0.2,
                    terminal_weight: 100.0,
                    restarts: 4,
                    ..sc.trainer.clone()
                };
                explorer.cem.iterations = 150;
                sc.explorer = Some(explorer);
                sc
            }
            other => {
                return Err(SteerError::Config(format!(
                    "unknown scenario '{other}', built-ins are {:?}",
                    Self::builtin_names()
                )))
            }
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(text).map_err(|e| SteerError::Config(format!("scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Loads a built-in by name or a JSON file by path.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if Self::builtin_names().contains(&name_or_path) {
            return Self::builtin(name_or_path);
        }
        let text = std::fs::read_to_string(name_or_path)
            .map_err(|e| SteerError::Config(format!("cannot read scenario '{name_or_path}': {e}")))?;
        Self::from_json(&text)
    }

    /// Applies `key=value` overrides with dotted keys, e.g. `trainer.iterations=5`.
    /// Values parse as JSON when possible and as strings otherwise.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self)?;
        for ov in overrides {
            let ov = ov.as_ref();
            let (key, raw) =
                ov.split_once('=').ok_or_else(|| SteerError::Config(format!("override '{ov}' is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key, value)?;
        }
        let sc: Self = serde_json::from_value(doc).map_err(|e| SteerError::Config(format!("after overrides: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SteerError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let game = self.game.build()?;
        let n = game.num_agents();
        match (&self.model, &self.class) {
            (None, None) => return Err(SteerError::Config("scenario needs a model or a class".into())),
            (Some(m), _) => m.validate(n)?,
            _ => {}
        }
        if let Some(c) = &self.class {
            c.validate(n)?;
            for t in &self.truths {
                c.check_id(t)?;
            }
        }
        self.objective.validate()?;
        self.trainer.validate()?;
        if let Some(e) = &self.explorer {
            e.validate()?;
        }
        if let Some(t) = self.explore_horizon {
            if t >= self.horizon {
                return Err(SteerError::Config(format!(
                    "explore_horizon {t} must be smaller than horizon {}",
                    self.horizon
                )));
            }
        }
        if !(self.epsilon >= 0.0) || self.rollouts == 0 {
            return Err(SteerError::Config("epsilon must be nonnegative and rollouts positive".into()));
        }
        StartSampler::new(&self.starts, game.policy_shape())?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let doc = serde_json::to_value(self).expect("scenario serializes");
        hex::encode(Sha256::digest(doc.to_string().as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Models evaluated by `simulate`: the known model, or one per listed truth.
    pub fn eval_models(&self) -> Result<Vec<(String, DynamicsModel)>> {
        if let Some(m) = &self.model {
            return Ok(vec![("model".into(), m.clone())]);
        }
        let class = self.class.as_ref().expect("validated");
        if self.truths.is_empty() {
            return Err(SteerError::Config("scenario with a class needs at least one truth".into()));
        }
        self.truths.iter().map(|t| Ok((format_id(t), class.model(t)?))).collect()
    }

    /// Evaluation starts; random starts use `seed`.
    pub fn eval_starts(&self, game: &MarkovGame<f64>, seed: u64) -> Result<Vec<JointPolicy<f64>>> {
        Ok(match &self.starts {
            StartRule::Grid { resolution } => init_grid(game.policy_shape(), *resolution)?,
            StartRule::Fixed { policy } => vec![policy.clone()],
            rule @ StartRule::Random { .. } => {
                let s = StartSampler::new(rule, game.policy_shape())?;
                (0..self.random_starts).map(|i| s.draw(derive_seed(seed, &[7, i as u64]), i)).collect()
            }
        })
    }
}

pub fn format_id(id: &[usize]) -> String {
    id.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-")
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize =
                    part.parse().map_err(|_| SteerError::Config(format!("'{part}' in '{key}' is not an index")))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| SteerError::Config(format!("index {idx} out of range in '{key}'")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(SteerError::Config(format!("cannot descend into '{part}' of '{key}'"))),
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate_and_round_trip() {
        for name in Scenario::builtin_names() {
            let sc = Scenario::builtin(name).unwrap();
            let back = Scenario::from_json(&sc.to_json()).unwrap();
            assert_eq!(back, sc, "{name}");
            assert_eq!(back.config_hash(), sc.config_hash());
        }
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let sc = Scenario::builtin("staghunt").unwrap();
        let o = sc
            .with_overrides(&["horizon=0", "objective.beta=10", "trainer.iterations=3", "starts.resolution=2"])
            .unwrap();
        assert_eq!(o.horizon, 0);
        assert_eq!(o.objective.beta, 10.0);
        assert_eq!(o.trainer.cem.iterations, 3);
        assert_eq!(o.starts, StartRule::Grid { resolution: 2 });
        assert_ne!(o.config_hash(), sc.config_hash());
        assert!(sc.with_overrides(&["horizon"]).is_err());
        assert!(sc.with_overrides(&["schema_version=9"]).is_err());
    }

    #[test]
    fn fete_horizons_are_checked() {
        let sc = Scenario::builtin("coop10").unwrap();
        assert!(sc.with_overrides(&["explore_horizon=500"]).is_err());
    }

    #[test]
    fn unknown_builtin_is_a_config_error() {
        assert!(matches!(Scenario::load("nope"), Err(SteerError::Config(_))));
    }
}
