use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::env::{SteeringTrajectory, Summary};
use crate::error::Result;
use crate::game::PolicyShape;

/// Column names for every entry of a per-agent table, prefixed with `prefix`.
pub fn table_columns(shape: &PolicyShape, prefix: &str) -> Vec<String> {
    let simple = shape.horizon == 1 && shape.num_states == 1;
    let mut cols = Vec::with_capacity(shape.total_len());
    for (n, h, s) in shape.blocks() {
        for a in 0..shape.actions[n] {
            cols.push(if simple { format!("{prefix}{n}_{a}") } else { format!("{prefix}{n}_h{h}_s{s}_{a}") });
        }
    }
    cols
}

/// One row per policy `pi_1 .. pi_{T+1}`; the last row has empty reward and cost
/// fields. Belief columns are added when the trajectory carries posteriors.
pub fn trajectory_csv(traj: &SteeringTrajectory<f64>, with_belief: bool) -> String {
    let beliefs = (with_belief && !traj.beliefs.is_empty()).then_some(traj.beliefs.as_slice());
    let shape = traj.policies[0].shape();
    let mut header = vec!["t".to_string()];
    header.extend(table_columns(shape, "pi"));
    header.extend(table_columns(shape, "u"));
    header.push("cost".into());
    header.push("goal".into());
    if let Some(b) = beliefs.and_then(|b| b.first()) {
        for (k, comp) in b.iter().enumerate() {
            header.extend((0..comp.len()).map(|i| format!("b{k}_{i}")));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    let width = shape.total_len();
    for (t, pi) in traj.policies.iter().enumerate() {
        let _ = write!(out, "{}", t + 1);
        for p in pi.iter() {
            let _ = write!(out, ",{p}");
        }
        match traj.rewards.get(t) {
            Some(u) => {
                for x in u.iter() {
                    let _ = write!(out, ",{x}");
                }
                let _ = write!(out, ",{}", traj.costs[t]);
            }
            None => out.push_str(&",".repeat(width + 1)),
        }
        let _ = write!(out, ",{}", traj.goals[t]);
        if let Some(b) = beliefs.and_then(|b| b.get(t)) {
            for x in b.iter().flatten() {
                let _ = write!(out, ",{x}");
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct EpisodeRecord {
    pub file: String,
    pub model: String,
    pub start: usize,
    pub rollout: usize,
    pub seed: u64,
    pub terminal_policy: Vec<f64>,
    pub gap: f64,
    pub cost: f64,
    pub objective: f64,
    pub success: bool,
    pub clamped: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Aggregate {
    pub model: String,
    pub gap: Summary,
    pub cost: Summary,
    pub objective: Summary,
    pub success_rate: f64,
}

impl Aggregate {
    pub fn of(model: &str, eps: f64, episodes: &[&EpisodeRecord]) -> Self {
        let col = |f: fn(&EpisodeRecord) -> f64| episodes.iter().map(|e| f(e)).collect::<Vec<_>>();
        let hits = episodes.iter().filter(|e| e.gap <= eps).count();
        Self {
            model: model.into(),
            gap: Summary::of(&col(|e| e.gap)),
            cost: Summary::of(&col(|e| e.cost)),
            objective: Summary::of(&col(|e| e.objective)),
            success_rate: hits as f64 / episodes.len().max(1) as f64,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub schema_version: u32,
    pub scenario: String,
    pub config_hash: String,
    pub strategy: String,
    pub seed: u64,
    pub epsilon: f64,
    pub max_goal: f64,
    pub episodes: Vec<EpisodeRecord>,
    pub per_model: Vec<Aggregate>,
}

/// Lists everything a command wrote. The only place a timestamp appears.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
    pub created_unix: u64,
}

/// Collects output files under one directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, contents)?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn finish(
        mut self,
        command: &str,
        scenario: &str,
        config_hash: &str,
        seed: u64,
        seeds: Vec<u64>,
    ) -> Result<Manifest> {
        let created_unix =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = Manifest {
            schema_version: super::SCHEMA_VERSION,
            command: command.into(),
            scenario: scenario.into(),
            config_hash: config_hash.into(),
            seed,
            seeds,
            files: std::mem::take(&mut self.files),
            created_unix,
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(manifest)
    }
}
