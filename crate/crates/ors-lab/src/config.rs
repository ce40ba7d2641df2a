//! Run configuration: one TOML document with a section per pipeline stage.
//! Every field has a default; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{DeterministicMdp, EnvError, GridMaze, PolicySpec};
use crate::flow::FlowConfig;
use crate::gcrl::{FutureSampling, GciqlConfig, GoalSampler};
use crate::reward::RewardTrainConfig;
use crate::util::fnv1a64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown environment spec {0:?}")]
    UnknownEnv(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Built-in name (`chain:N`, `grid:RxC`, `umaze`, `family:standard`) or a
    /// maze file path prefixed with `file:`.
    pub spec: String,
    /// Discount for the exact pipeline.
    pub gamma: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { spec: "grid:8x8".to_string(), gamma: 0.99 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// `uniform-random`, `eps-greedy-random-goals`, or `layer-monotone`.
    pub policy: String,
    pub eps: f64,
    /// Goal the layer-monotone policy descends toward; `-1` picks the most
    /// central state.
    pub goal: i64,
    pub n_trajectories: usize,
    pub horizon: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            policy: "eps-greedy-random-goals".to_string(),
            eps: 0.5,
            goal: -1,
            n_trajectories: 300,
            horizon: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub p_cur: f64,
    pub p_traj: f64,
    pub p_rand: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { p_cur: 0.2, p_traj: 0.5, p_rand: 0.3 }
    }
}

impl SamplerConfig {
    pub fn to_sampler(&self) -> Result<GoalSampler, crate::gcrl::GcrlError> {
        let mut sampler = GoalSampler::new(self.p_cur, self.p_traj, self.p_rand)?;
        sampler.future = FutureSampling::Uniform;
        Ok(sampler)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    #[serde(flatten)]
    pub train: RewardTrainConfig,
    pub sampler: SamplerConfig,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { train: RewardTrainConfig::default(), sampler: SamplerConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(flatten)]
    pub gciql: GciqlConfig,
    /// `exact`, `distilled`, or `sparse`.
    pub reward_source: String,
    pub critic_sampler: SamplerConfig,
    pub actor_sampler: SamplerConfig,
    /// Scale divisor applied to exact shaped rewards; non-positive values
    /// normalize by the mean table magnitude instead.
    pub reward_scale: f64,
    /// Goals used for evaluation rollouts; empty picks every state of small
    /// instances and a spread sample of larger ones.
    pub eval_goals: Vec<usize>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            gciql: GciqlConfig::default(),
            reward_source: "exact".to_string(),
            critic_sampler: SamplerConfig::default(),
            actor_sampler: SamplerConfig::default(),
            reward_scale: 0.0,
            eval_goals: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub sigmas: Vec<f64>,
    pub seeds: usize,
    pub gamma: f64,
    /// Number of expert trajectories (chains of decreasing length).
    pub n_trajectories: usize,
    /// Length of the longest expert trajectory.
    pub max_length: usize,
    pub scale: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            sigmas: vec![1e-4, 5e-4, 1e-3, 5e-3],
            seeds: 100,
            gamma: 0.99,
            n_trajectories: 5,
            max_length: 450,
            scale: 1.0,
        }
    }
}

/// The complete run configuration.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub env: EnvConfig,
    pub dataset: DatasetConfig,
    pub occupancy: FlowConfig,
    pub reward: RewardConfig,
    pub policy: PolicyConfig,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Stable hash of the serialized config, embedded in checkpoints.
    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.to_toml().as_bytes()))
    }

    /// Builds the configured environment. `family:standard` is handled by
    /// the verify command and rejected here.
    pub fn build_env(&self) -> Result<DeterministicMdp, ConfigError> {
        let spec = self.env.spec.as_str();
        let maze = if let Some(rest) = spec.strip_prefix("chain:") {
            let n: usize = rest.parse().map_err(|_| ConfigError::UnknownEnv(spec.to_string()))?;
            GridMaze::chain(n)
        } else if let Some(rest) = spec.strip_prefix("grid:") {
            let (r, c) = rest
                .split_once('x')
                .ok_or_else(|| ConfigError::UnknownEnv(spec.to_string()))?;
            let rows: usize = r.parse().map_err(|_| ConfigError::UnknownEnv(spec.to_string()))?;
            let cols: usize = c.parse().map_err(|_| ConfigError::UnknownEnv(spec.to_string()))?;
            GridMaze::open(rows, cols)
        } else if spec == "umaze" {
            GridMaze::u_maze()
        } else if let Some(path) = spec.strip_prefix("file:") {
            GridMaze::load(Path::new(path))?
        } else {
            return Err(ConfigError::UnknownEnv(spec.to_string()));
        };
        Ok(DeterministicMdp::from_maze(&maze, self.env.gamma))
    }

    pub fn dataset_policy(&self) -> Result<PolicySpec, ConfigError> {
        Ok(PolicySpec::parse(&self.dataset.policy, self.dataset.eps)?)
    }

    /// The dataset goal: explicit index, or the most central state.
    pub fn dataset_goal(&self, mdp: &DeterministicMdp) -> usize {
        if self.dataset.goal >= 0 {
            self.dataset.goal as usize
        } else {
            most_central_state(mdp)
        }
    }
}

pub fn most_central_state(mdp: &DeterministicMdp) -> usize {
    let n = mdp.n_states as f64;
    let dim = mdp.embed_dim();
    let centroid: Vec<f64> = (0..dim)
        .map(|d| (0..mdp.n_states).map(|s| mdp.embed(s)[d]).sum::<f64>() / n)
        .collect();
    (0..mdp.n_states)
        .min_by(|&a, &b| {
            let da: f64 =
                mdp.embed(a).iter().zip(&centroid).map(|(x, c)| (x - c) * (x - c)).sum();
            let db: f64 =
                mdp.embed(b).iter().zip(&centroid).map(|(x, c)| (x - c) * (x - c)).sum();
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        })
        .expect("non-empty state space")
}
