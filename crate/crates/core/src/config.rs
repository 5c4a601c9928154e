//! Run configuration: every knob of the pipeline, serializable as TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{AifError, Result};
use crate::model::{ModelConfig, TrainConfig};
use crate::planner::PlannerConfig;
use crate::policy::PolicyTrainConfig;
use crate::prior::PriorMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub episodes: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self { episodes: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertConfig {
    pub episodes: usize,
    pub start_low: f64,
    pub start_high: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            episodes: 5,
            start_low: -0.6,
            start_high: -0.4,
        }
    }
}

impl ExpertConfig {
    /// Evenly spaced starts, endpoints included.
    pub fn starts(&self) -> Vec<f64> {
        match self.episodes {
            0 => Vec::new(),
            1 => vec![0.5 * (self.start_low + self.start_high)],
            n => (0..n)
                .map(|i| self.start_low + (self.start_high - self.start_low) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Held-out random-agent episodes for open-loop prediction error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub episodes: usize,
    pub horizon: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            episodes: 20,
            horizon: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub mode: PriorMode,
    pub threshold: usize,
    pub horizon: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            mode: PriorMode::Demos,
            threshold: 100,
            horizon: 200,
        }
    }
}

/// One-shot scoring of a candidate population from a fixed start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanEvalConfig {
    pub start: f64,
    pub num_candidates: usize,
    pub horizon: usize,
    pub permutations: usize,
    /// Closed-loop episodes of the planning agent; each re-plans every step.
    pub closed_loop_episodes: usize,
}

impl Default for PlanEvalConfig {
    fn default() -> Self {
        Self {
            start: -0.5,
            num_candidates: 500,
            horizon: 200,
            permutations: 1999,
            closed_loop_episodes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub episodes: usize,
    pub start_low: f64,
    pub start_high: f64,
    pub baseline_start: f64,
    pub baseline_episodes: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            start_low: -1.1,
            start_high: 0.3,
            baseline_start: -0.5,
            baseline_episodes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Prior the habit policy is trained against.
    pub policy_prior: PriorMode,
    pub env: EnvConfig,
    pub collect: CollectConfig,
    pub expert: ExpertConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub validation: ValidationConfig,
    pub prior: PriorConfig,
    pub planner: PlannerConfig,
    pub plan_eval: PlanEvalConfig,
    pub policy: PolicyTrainConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            policy_prior: PriorMode::Demos,
            env: EnvConfig::default(),
            collect: CollectConfig::default(),
            expert: ExpertConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            validation: ValidationConfig::default(),
            prior: PriorConfig::default(),
            planner: PlannerConfig::default(),
            plan_eval: PlanEvalConfig::default(),
            policy: PolicyTrainConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| AifError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AifError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            AifError::Config(m) => AifError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AifError::Config(m.to_string()));
        if self.env.max_steps == 0 || !(self.env.noise_std >= 0.0) {
            return bad("env.max_steps must be positive and env.noise_std non-negative");
        }
        if self.collect.episodes == 0 || self.expert.episodes == 0 {
            return bad("collect.episodes and expert.episodes must be positive");
        }
        if !(self.expert.start_low <= self.expert.start_high) || !(self.evaluation.start_low <= self.evaluation.start_high) {
            return bad("start ranges must satisfy low <= high");
        }
        if self.model.state_dim == 0 {
            return bad("model.state_dim must be positive");
        }
        if self.validation.episodes == 0 || self.validation.horizon == 0 {
            return bad("validation.episodes and validation.horizon must be positive");
        }
        if self.prior.horizon == 0 {
            return bad("prior.horizon must be positive");
        }
        if self.plan_eval.num_candidates < 2 || self.plan_eval.horizon == 0 {
            return bad("plan_eval needs at least two candidates and a positive horizon");
        }
        if self.plan_eval.horizon > self.prior.horizon || self.planner.horizon > self.prior.horizon {
            return bad("planning horizons must not exceed prior.horizon");
        }
        if self.policy_prior == PriorMode::Flat {
            return bad("policy_prior must be demos or reward");
        }
        Ok(())
    }
}
