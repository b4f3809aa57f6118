//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sili_core::agents::{AgentKind, SacConfig};
use sili_core::envs::{AnyEnv, EnvKind, EnvOverrides, HiPMDPEnv};
use sili_core::latent::{LatentMode, LatentModelConfig};
use sili_core::replay::DEFAULT_CAPACITY;
use sili_core::stability::{StabilityConfig, DEFAULT_BETA};
use sili_core::trainer::{TrainerConfig, DEFAULT_WARMUP};

use crate::ConfigError;

fn default_eval_every() -> u64 {
    100
}

fn default_eval_episodes() -> usize {
    5
}

fn default_warmup() -> u64 {
    DEFAULT_WARMUP
}

fn default_repr_batch() -> usize {
    64
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/latest")
}

/// Everything needed to reproduce a run. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    #[serde(default)]
    pub env_overrides: EnvOverrides,
    pub agent: AgentKind,
    /// Defaults to beta 0.5 with the environment's own stability setting.
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    /// Defaults follow the stability setting (continuous for euclidean).
    #[serde(default)]
    pub latent: Option<LatentModelConfig>,
    #[serde(default)]
    pub sac: SacConfig,
    pub interactions: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_warmup")]
    pub warmup_interactions: u64,
    #[serde(default)]
    pub representation_updates: Option<usize>,
    #[serde(default = "default_repr_batch")]
    pub representation_batch: usize,
    #[serde(default)]
    pub rl_updates: Option<usize>,
    #[serde(default = "default_capacity")]
    pub replay_capacity: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Also write every interaction to `trajectories_seed<S>.ndjson`.
    #[serde(default)]
    pub log_trajectories: bool,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the essentials.
    pub fn new(env: EnvKind, agent: AgentKind, interactions: u64, seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            env,
            env_overrides: EnvOverrides::default(),
            agent,
            stability: None,
            latent: None,
            sac: SacConfig::default(),
            interactions,
            seeds,
            eval_every: default_eval_every(),
            eval_episodes: default_eval_episodes(),
            warmup_interactions: DEFAULT_WARMUP,
            representation_updates: None,
            representation_batch: default_repr_batch(),
            rl_updates: None,
            replay_capacity: DEFAULT_CAPACITY,
            output_dir: default_output(),
            log_trajectories: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn build_env(&self, seed: u64) -> Result<AnyEnv, ConfigError> {
        AnyEnv::build(self.env, &self.env_overrides, seed).map_err(|e| ConfigError(e.to_string()))
    }

    /// Stability settings with the environment default filled in.
    pub fn resolved_stability(&self) -> Result<StabilityConfig, ConfigError> {
        match self.stability {
            Some(s) => Ok(s),
            None => Ok(StabilityConfig { beta: DEFAULT_BETA, metric: self.build_env(0)?.default_stability(), anneal: None }),
        }
    }

    pub fn resolved_latent(&self) -> Result<LatentModelConfig, ConfigError> {
        match &self.latent {
            Some(l) => Ok(l.clone()),
            None => {
                let mode = match self.resolved_stability()?.metric {
                    sili_core::stability::StabilityMetric::Euclidean => LatentMode::Continuous,
                    _ => LatentMode::Discrete,
                };
                Ok(LatentModelConfig { mode, ..LatentModelConfig::default() })
            }
        }
    }

    pub fn trainer_config(&self) -> Result<TrainerConfig, ConfigError> {
        let cfg = TrainerConfig {
            agent: self.agent,
            latent: self.resolved_latent()?,
            stability: self.resolved_stability()?,
            sac: self.sac.clone(),
            warmup_interactions: self.warmup_interactions,
            representation_updates: self.representation_updates,
            representation_batch: self.representation_batch,
            rl_updates: self.rl_updates,
            replay_capacity: self.replay_capacity,
        };
        cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }

    /// The config with every default made explicit, as echoed to `config.json`.
    pub fn resolved(&self) -> Result<Self, ConfigError> {
        Ok(ExperimentConfig {
            stability: Some(self.resolved_stability()?),
            latent: Some(self.resolved_latent()?),
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.interactions < 2 {
            return Err(ConfigError("interactions must be at least 2".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(ConfigError("seeds must be distinct".into()));
        }
        if self.eval_every == 0 {
            return Err(ConfigError("eval_every must be at least 1".into()));
        }
        self.trainer_config()?;
        Ok(())
    }
}
